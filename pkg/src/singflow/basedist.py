"""Base distributions for the flow: truncated generalized gamma and Gaussian.

The generalized-gamma coordinate has density proportional to
``xi**(2*k*lam - 1) * exp(-beta * xi**(2*k))`` on [0, 1]; sampling goes
through the rate-1 gamma variable t = beta * xi**(2k) (inverse CDF, truncated
at t = beta). Base parameters are frozen during training: only the flow
weights move, so entropies here are constants of the optimization.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import special
from .kernels import reg_lower_gamma_kernel, trunc_gamma_ppf_batch

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GenGammaParams:
    lam: np.ndarray
    k: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("lam", "k", "beta"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or not np.all(arr > 0.0):
                raise ValueError(f"GenGammaParams.{name} must be a positive vector")
        if not (self.lam.shape == self.k.shape == self.beta.shape):
            raise ValueError("GenGammaParams fields must share one length")

    @property
    def d(self) -> int:
        return self.lam.shape[0]


@dataclass(frozen=True)
class BaseSample:
    xi: np.ndarray
    log_density_at_xi: float


def default_gengamma_params(d: int, n: int) -> GenGammaParams:
    """Frozen initialization: lam = k = 1, beta = (n, d/2, ..., d/2)."""
    beta = np.full(d, d / 2.0)
    beta[0] = float(n)
    return GenGammaParams(lam=np.ones(d), k=np.ones(d), beta=beta)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_gengamma_matrix(params: GenGammaParams, rng, count: int) -> np.ndarray:
    """count x d matrix of base draws, coordinates independent."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = _as_rng(rng)
    u = rng.random((count, params.d))
    out = np.empty((count, params.d))
    for j in range(params.d):
        lam = float(params.lam[j])
        beta = float(params.beta[j])
        cap_p, _, _ = reg_lower_gamma_kernel(lam, beta)
        t, ok = trunc_gamma_ppf_batch(lam, cap_p, u[:, j])
        if not ok:
            raise ArithmeticError(
                f"truncated-gamma inversion failed for coordinate {j} "
                f"(lam={lam}, beta={beta})"
            )
        v = np.maximum(t / beta, 1e-300)
        out[:, j] = v ** (1.0 / (2.0 * float(params.k[j])))
    return out


def sample_gengamma(params: GenGammaParams, seed, count: int) -> list[BaseSample]:
    xi = sample_gengamma_matrix(params, seed, count)
    return [BaseSample(xi=row, log_density_at_xi=log_density_gengamma(params, row))
            for row in xi]


def log_density_gengamma(params: GenGammaParams, xi: np.ndarray) -> float:
    """Log density of one d-vector; -inf outside the support (0, 1]^d."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (params.d,):
        raise ValueError(f"xi has shape {xi.shape}, expected ({params.d},)")
    if np.any(xi <= 0.0) or np.any(xi > 1.0):
        return -math.inf
    total = 0.0
    for j in range(params.d):
        lam, k, beta = float(params.lam[j]), float(params.k[j]), float(params.beta[j])
        total += (
            (2.0 * k * lam - 1.0) * math.log(xi[j])
            - beta * xi[j] ** (2.0 * k)
            - special.log_b_normalizer(lam, k, beta)
        )
    return total


def entropy_gengamma(params: GenGammaParams) -> float:
    """Differential entropy; additive over the independent coordinates."""
    total = 0.0
    for j in range(params.d):
        lam, k, beta = float(params.lam[j]), float(params.k[j]), float(params.beta[j])
        e_log_xi = special.expected_log_v(lam, beta) / (2.0 * k)
        total += (
            -(2.0 * k * lam - 1.0) * e_log_xi
            + beta * special.g_moment(lam, beta)
            + special.log_b_normalizer(lam, k, beta)
        )
    return total


def sample_gaussian_matrix(d: int, rng, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return _as_rng(rng).standard_normal((count, d))


def sample_gaussian(d: int, seed, count: int) -> list[BaseSample]:
    xi = sample_gaussian_matrix(d, seed, count)
    return [BaseSample(xi=row, log_density_at_xi=log_density_gaussian(row))
            for row in xi]


def log_density_gaussian(xi: np.ndarray) -> float:
    xi = np.asarray(xi, dtype=np.float64)
    return -0.5 * xi.size * LOG_2PI - 0.5 * float(xi @ xi)


def entropy_gaussian(d: int) -> float:
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return 0.5 * d * (LOG_2PI + 1.0)


# --- uniform dispatch used by the trainer ----------------------------------

def base_entropy(kind: str, d: int, params: GenGammaParams | None) -> float:
    if kind == "gengamma":
        return entropy_gengamma(params)
    if kind == "gaussian":
        return entropy_gaussian(d)
    raise ValueError(f"unknown base kind: {kind!r}")


def sample_base_matrix(kind: str, d: int, params: GenGammaParams | None,
                       rng, count: int) -> np.ndarray:
    if kind == "gengamma":
        return sample_gengamma_matrix(params, rng, count)
    if kind == "gaussian":
        return sample_gaussian_matrix(d, rng, count)
    raise ValueError(f"unknown base kind: {kind!r}")
