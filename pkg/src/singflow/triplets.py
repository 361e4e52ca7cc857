"""Model-truth-prior triplets: data generation, likelihoods, and RLCT oracles.

Four regression families, all realizable with unit Gaussian noise and a
standard Gaussian prior on the weights:

  tanh            f(x, w) = sum_h b_h tanh(a_h x), random truth
  tanh_zero_mean  same model, truth w0 = 0 (known RLCT)
  reduced_rank    y = B A x with A: H x (H+3), B: H x H (known RLCT)
  ffrelu          y = w2 relu(w1 x), x in R^13, random truth

Weight packing is row-major with the first-layer matrix first; the exact
layout is what save/export formats rely on.
"""

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .kernels import relu_fwd

LOG_2PI = math.log(2.0 * math.pi)
KINDS = ("tanh", "tanh_zero_mean", "reduced_rank", "ffrelu")
DEFAULT_TRUTH_SEED = 20240711


@dataclass(frozen=True)
class Triplet:
    kind: str
    H: int
    truth_seed: int = DEFAULT_TRUTH_SEED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown triplet kind {self.kind!r}")
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")

    @property
    def dim_x(self) -> int:
        if self.kind in ("tanh", "tanh_zero_mean"):
            return 1
        if self.kind == "reduced_rank":
            return self.H + 3
        return 13

    @property
    def dim_y(self) -> int:
        return self.H if self.kind == "reduced_rank" else 1

    @property
    def dim_w(self) -> int:
        if self.kind in ("tanh", "tanh_zero_mean"):
            return 2 * self.H
        if self.kind == "reduced_rank":
            return self.H * (self.H + 3) + self.H * self.H
        return 14 * self.H

    def truth(self) -> np.ndarray:
        if self.kind == "tanh_zero_mean":
            return np.zeros(self.dim_w)
        if self.kind == "reduced_rank":
            h = self.H
            a0 = np.concatenate([np.eye(h), np.ones((h, 3))], axis=1)
            b0 = np.eye(h)
            return np.concatenate([a0.ravel(), b0.ravel()])
        rng = np.random.default_rng(self.truth_seed)
        return rng.standard_normal(self.dim_w)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def generate_data(triplet: Triplet, n: int, seed) -> Dataset:
    """Inputs per the family's law, targets = f(x, w0) + unit Gaussian noise."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if triplet.kind in ("tanh", "tanh_zero_mean"):
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
    else:
        x = rng.standard_normal((n, triplet.dim_x))
    mean = model_mean(triplet, triplet.truth(), x)
    y = mean + rng.standard_normal((n, triplet.dim_y))
    return Dataset(inputs=x, targets=y)


def model_mean(triplet: Triplet, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Predictive mean f(x, w) for a batch of inputs, shape (n, dim_y)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (triplet.dim_w,):
        raise ValueError(f"w has shape {w.shape}, expected ({triplet.dim_w},)")
    h = triplet.H
    if triplet.kind in ("tanh", "tanh_zero_mean"):
        a, b = w[:h], w[h:]
        return np.tanh(x @ a[None, :]) @ b[:, None]
    if triplet.kind == "reduced_rank":
        m = h + 3
        a_mat = w[:h * m].reshape(h, m)
        b_mat = w[h * m:].reshape(h, h)
        return x @ a_mat.T @ b_mat.T
    w1 = w[:13 * h].reshape(h, 13)
    w2 = w[13 * h:].reshape(1, h)
    return relu_fwd(x @ w1.T) @ w2.T


def point_logpdfs(triplet: Triplet, w: np.ndarray, data: Dataset) -> np.ndarray:
    """Per-observation log p(y_i | x_i, w), shape (n,)."""
    resid = data.targets - model_mean(triplet, w, data.inputs)
    return -0.5 * triplet.dim_y * LOG_2PI - 0.5 * (resid * resid).sum(axis=1)


def log_lik(triplet: Triplet, w: np.ndarray, data: Dataset) -> float:
    """Total log likelihood of the dataset at weights w."""
    return float(point_logpdfs(triplet, w, data).sum())


def truth_logpdfs(triplet: Triplet, data: Dataset) -> np.ndarray:
    return point_logpdfs(triplet, triplet.truth(), data)


def empirical_entropy(triplet: Triplet, data: Dataset) -> float:
    """S_n = -(1/n) sum_i log p(y_i | x_i, w0)."""
    return -float(truth_logpdfs(triplet, data).mean())


def log_prior(w: np.ndarray) -> float:
    """Standard Gaussian prior over the weight vector."""
    w = np.asarray(w, dtype=np.float64)
    return -0.5 * w.size * LOG_2PI - 0.5 * float(w @ w)


# --- tape versions (differentiable through w) --------------------------------

def log_lik_node(triplet: Triplet, w_node: "ad.DiffNode", data: Dataset,
                 tape: "ad.DiffTape") -> "ad.DiffNode":
    """Record the dataset log likelihood; w_node is a (1, dim_w) row."""
    h = triplet.H
    x_const = tape.constant(data.inputs)
    y_const = tape.constant(data.targets)
    if triplet.kind in ("tanh", "tanh_zero_mean"):
        a = ad.narrow(w_node, 1, 0, h)
        b = ad.narrow(w_node, 1, h, h)
        hidden = ad.tanh(ad.matmul(x_const, a))
        pred = ad.matmul(hidden, ad.transpose(b))
    elif triplet.kind == "reduced_rank":
        m = h + 3
        a_t = ad.transpose(ad.reshape(ad.narrow(w_node, 1, 0, h * m), (h, m)))
        b_t = ad.transpose(ad.reshape(ad.narrow(w_node, 1, h * m, h * h), (h, h)))
        pred = ad.matmul(ad.matmul(x_const, a_t), b_t)
    else:
        w1_t = ad.transpose(ad.reshape(ad.narrow(w_node, 1, 0, 13 * h), (h, 13)))
        w2_t = ad.transpose(ad.narrow(w_node, 1, 13 * h, h))
        pred = ad.matmul(ad.relu(ad.matmul(x_const, w1_t)), w2_t)
    resid = ad.sub(y_const, pred)
    sq_sum = ad.sum_all(ad.square(resid))
    const = tape.constant(-0.5 * data.n * triplet.dim_y * LOG_2PI)
    return ad.add(ad.smul(sq_sum, -0.5), const)


def log_prior_node(w_node: "ad.DiffNode", tape: "ad.DiffTape") -> "ad.DiffNode":
    d = w_node.value.size
    const = tape.constant(-0.5 * d * LOG_2PI)
    return ad.add(ad.smul(ad.sum_all(ad.square(w_node)), -0.5), const)


# --- RLCT oracle --------------------------------------------------------------

def true_rlct(triplet: Triplet) -> tuple[Fraction, int] | None:
    """Exact (lambda, multiplicity) where known; None for random-truth families."""
    if triplet.kind == "tanh_zero_mean":
        i = math.isqrt(triplet.H)
        lam = Fraction(triplet.H + i * i + i, 4 * i + 2)
        return lam, (2 if i * i == triplet.H else 1)
    if triplet.kind == "reduced_rank":
        h = triplet.H
        m, n_out, r = h + 3, h, h
        return Fraction(n_out * h - h * r + m * r, 2), 1
    return None


# --- dataset export -----------------------------------------------------------

def export_csv(data: Dataset, path: str) -> None:
    """One row per observation: input coordinates then target coordinates."""
    dim_x = data.inputs.shape[1]
    dim_y = data.targets.shape[1]
    header = [f"x{j}" for j in range(dim_x)] + [f"y{j}" for j in range(dim_y)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow([repr(v) for v in data.inputs[i]] +
                            [repr(v) for v in data.targets[i]])
