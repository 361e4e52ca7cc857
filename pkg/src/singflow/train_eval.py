"""ELBO estimation, full-batch ADAM training, and MVFE/VGE evaluation.

Training maximizes a Monte Carlo ELBO: draw M base points (constants on the
tape), push them through the flow, and average dataset log likelihood plus
prior plus exact log-Jacobian, with the base entropy added analytically. Only
the flow weights receive gradients; base parameters stay frozen.

Evaluation never touches a tape: the final ELBO is re-estimated with fresh
samples, the normalized MVFE is -ELBO - n * S_n, and the generalization error
compares true and induced predictive log densities on held-out data.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import basedist, flow, triplets
from .kernels import adam_step


@dataclass
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 0.01
    mc_samples: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    full_batch: bool = True
    grad_clip: float | None = 100.0
    trace_every: int = 50


@dataclass
class TrainResult:
    params: flow.FlowParams
    status: str                      # "ok" or "diverged"
    failed_epoch: int | None = None
    trace: list = field(default_factory=list)  # (epoch, elbo) pairs


@dataclass(frozen=True)
class EvalResult:
    mvfe_normalized: float
    vge: float
    elbo_final: float
    n: int
    seed: int


def elbo_estimate(base_kind: str, base_params, spec: flow.FlowSpec,
                  params: flow.FlowParams, triplet: triplets.Triplet,
                  data: triplets.Dataset, mc_samples: int, rng):
    """Record the M-sample ELBO estimator on a fresh tape.

    Returns (tape, elbo_node, leaves); leaves are the flow parameter nodes in
    flat-vector order.
    """
    if mc_samples < 1:
        raise ValueError(f"mc_samples must be >= 1, got {mc_samples}")
    xi = basedist.sample_base_matrix(base_kind, spec.d, base_params, rng, mc_samples)
    entropy = basedist.base_entropy(base_kind, spec.d, base_params)
    tape = ad.DiffTape()
    w_node, log_det, leaves = flow.tape_forward(spec, params, tape, xi)
    total = None
    for s in range(mc_samples):
        w_s = ad.narrow(w_node, 0, s, 1)
        ll = triplets.log_lik_node(triplet, w_s, data, tape)
        lp = triplets.log_prior_node(w_s, tape)
        ld = ad.sum_all(ad.narrow(log_det, 0, s, 1))
        term = ad.add(ad.add(ll, lp), ld)
        if not np.isfinite(term.value):
            raise ArithmeticError(
                f"non-finite ELBO term at sample {s}: "
                f"loglik={float(ll.value):.3e}, logprior={float(lp.value):.3e}, "
                f"logdet={float(ld.value):.3e}, max|w|={np.abs(w_s.value).max():.3e}"
            )
        total = term if total is None else ad.add(total, term)
    elbo = ad.add(ad.smul(total, 1.0 / mc_samples), tape.constant(entropy))
    return tape, elbo, leaves


def elbo_with_grad(base_kind: str, base_params, spec, params, triplet, data,
                   mc_samples: int, rng) -> tuple[float, np.ndarray]:
    tape, elbo, leaves = elbo_estimate(base_kind, base_params, spec, params,
                                       triplet, data, mc_samples, rng)
    ad.backward(tape, elbo)
    return float(elbo.value), flow.grad_from_leaves(spec, leaves)


def elbo_value(base_kind: str, base_params, spec, params, triplet, data,
               n_samples: int, rng) -> float:
    """Tape-free ELBO estimate with n_samples draws (used for evaluation)."""
    xi = basedist.sample_base_matrix(base_kind, spec.d, base_params, rng, n_samples)
    w, log_det = flow.forward(spec, params, xi)
    total = 0.0
    for s in range(n_samples):
        total += (triplets.log_lik(triplet, w[s], data)
                  + triplets.log_prior(w[s]) + log_det[s])
    entropy = basedist.base_entropy(base_kind, spec.d, base_params)
    return total / n_samples + entropy


def train(triplet: triplets.Triplet, data: triplets.Dataset, base_kind: str,
          base_params, spec: flow.FlowSpec, config: TrainConfig,
          rng) -> TrainResult:
    """Full-batch ADAM on the flow weights; base parameters never move."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    params = flow.init_params(spec, rng)
    theta = params.vector
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = []
    for epoch in range(config.epochs):
        try:
            elbo, grad = elbo_with_grad(base_kind, base_params, spec, params,
                                        triplet, data, config.mc_samples, rng)
        except ArithmeticError:
            return TrainResult(params=params, status="diverged",
                               failed_epoch=epoch, trace=trace)
        if not np.all(np.isfinite(grad)):
            return TrainResult(params=params, status="diverged",
                               failed_epoch=epoch, trace=trace)
        if epoch % config.trace_every == 0:
            trace.append((epoch, elbo))
        grad = -grad  # ascend the ELBO with a descent-form optimizer
        if config.grad_clip is not None:
            norm = float(np.linalg.norm(grad))
            if norm > config.grad_clip:
                grad *= config.grad_clip / norm
        adam_step(theta, grad, m, v, epoch + 1, config.learning_rate,
                  config.adam_beta1, config.adam_beta2, config.adam_eps)
    return TrainResult(params=params, status="ok", trace=trace)


def mvfe(elbo_final: float, n: int, s_n: float) -> float:
    """Normalized minimum variational free energy: -ELBO - n * S_n."""
    return -elbo_final - n * s_n


def predictive_logpoints(spec, params, base_kind, base_params,
                         triplet: triplets.Triplet, data: triplets.Dataset,
                         n_samples: int, rng) -> np.ndarray:
    """log of the induced predictive density at each observation.

    Mixture over n_samples posterior draws, combined by log-sum-exp.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    xi = basedist.sample_base_matrix(base_kind, spec.d, base_params, rng, n_samples)
    w, _ = flow.forward(spec, params, xi)
    lp = np.empty((data.n, n_samples))
    for s in range(n_samples):
        lp[:, s] = triplets.point_logpdfs(triplet, w[s], data)
    return logsumexp_rows(lp) - math.log(n_samples)


def logsumexp_rows(lp: np.ndarray) -> np.ndarray:
    m = lp.max(axis=1)
    return m + np.log(np.exp(lp - m[:, None]).sum(axis=1))


def predictive_logdensity(spec, params, base_kind, base_params, triplet,
                          x, y, n_samples: int, rng) -> float:
    point = triplets.Dataset(inputs=np.atleast_2d(np.asarray(x, dtype=np.float64)),
                             targets=np.atleast_2d(np.asarray(y, dtype=np.float64)))
    return float(predictive_logpoints(spec, params, base_kind, base_params,
                                      triplet, point, n_samples, rng)[0])


def vge(spec, params, base_kind, base_params, triplet,
        test_data: triplets.Dataset, n_samples: int, rng) -> float:
    """Generalization error estimate against held-out data.

    Average of true minus induced predictive log density; a consistent,
    nonnegative-in-expectation KL estimate.
    """
    pred = predictive_logpoints(spec, params, base_kind, base_params, triplet,
                                test_data, n_samples, rng)
    return vge_from_logdensities(triplets.truth_logpdfs(triplet, test_data), pred)


def vge_from_logdensities(truth_lp: np.ndarray, pred_lp: np.ndarray) -> float:
    """Estimator core: mean over held-out points of log p0 - log p_hat."""
    return float(np.mean(np.asarray(truth_lp) - np.asarray(pred_lp)))


def evaluate(triplet, data, test_data, base_kind, base_params, spec, params,
             rng, seed: int = 0, eval_samples: int = 1000) -> EvalResult:
    """Final numbers for one trained cell; never runs on a training tape."""
    elbo_final = elbo_value(base_kind, base_params, spec, params, triplet,
                            data, eval_samples, rng)
    s_n = triplets.empirical_entropy(triplet, data)
    vge_val = vge(spec, params, base_kind, base_params, triplet, test_data,
                  eval_samples, rng)
    return EvalResult(
        mvfe_normalized=mvfe(elbo_final, data.n, s_n),
        vge=vge_val,
        elbo_final=elbo_final,
        n=data.n,
        seed=seed,
    )
