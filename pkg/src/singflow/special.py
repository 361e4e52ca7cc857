"""Special functions for the truncated generalized-gamma machinery.

The base density per coordinate is proportional to
``xi**(2*k*lam - 1) * exp(-beta * xi**(2*k))`` on [0, 1]. Everything below is
phrased in terms of the rate-1 gamma variable t = beta * xi**(2k), so the
regularized lower incomplete gamma function and its inverse do all the work.
"""

import math
from dataclasses import dataclass

from .kernels import inv_reg_lower_gamma_kernel, reg_lower_gamma_kernel


@dataclass(frozen=True)
class IncompleteGammaResult:
    value: float
    iterations: int
    converged: bool


def log_gamma(a: float) -> float:
    """ln Gamma(a) for a > 0."""
    if a <= 0.0:
        raise ValueError(f"log_gamma requires a > 0, got a={a}")
    return math.lgamma(a)


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) in [0, 1]."""
    res = reg_lower_gamma_detailed(a, x)
    return res.value


def reg_lower_gamma_detailed(a: float, x: float) -> IncompleteGammaResult:
    if a <= 0.0:
        raise ValueError(f"reg_lower_gamma requires a > 0, got a={a}")
    if x < 0.0:
        raise ValueError(f"reg_lower_gamma requires x >= 0, got x={x}")
    value, iters, conv = reg_lower_gamma_kernel(a, x)
    return IncompleteGammaResult(value=value, iterations=iters, converged=conv)


def inv_reg_lower_gamma(a: float, p: float) -> float:
    """Solve P(a, x) = p for x, with p in [0, 1)."""
    if a <= 0.0:
        raise ValueError(f"inv_reg_lower_gamma requires a > 0, got a={a}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"inv_reg_lower_gamma requires 0 <= p < 1, got p={p}")
    x, resid, conv = inv_reg_lower_gamma_kernel(a, p)
    if not conv:
        raise ArithmeticError(
            f"inv_reg_lower_gamma(a={a}, p={p}) did not converge; residual={resid:.3e}"
        )
    return x


def b_normalizer(lam: float, k: float, beta: float) -> float:
    """Normalizing constant of the truncated generalized-gamma coordinate.

    Equals beta**(-lam) * Gamma(lam) * P(lam, beta) / (2k), i.e. the integral
    of the unnormalized density over [0, 1].
    """
    _require_positive(lam=lam, k=k, beta=beta)
    return math.exp(log_b_normalizer(lam, k, beta))


def log_b_normalizer(lam: float, k: float, beta: float) -> float:
    """log of b_normalizer, safe for beta as large as the sample size."""
    _require_positive(lam=lam, k=k, beta=beta)
    p = reg_lower_gamma(lam, beta)
    return -lam * math.log(beta) + math.lgamma(lam) + math.log(p) - math.log(2.0 * k)


def g_moment(lam: float, beta: float) -> float:
    """E[xi**(2k)] under the truncated base; independent of k.

    In the rate-1 variable this is E[t]/beta for t ~ Gamma(lam) truncated to
    [0, beta], giving (lam/beta) * P(lam+1, beta) / P(lam, beta).
    """
    _require_positive(lam=lam, beta=beta)
    return (lam / beta) * reg_lower_gamma(lam + 1.0, beta) / reg_lower_gamma(lam, beta)


def power_moment(lam: float, k: float, beta: float, power: float) -> float:
    """E[xi**power] under the truncated base with shape (lam, k, beta)."""
    _require_positive(lam=lam, k=k, beta=beta)
    if power < 0.0:
        raise ValueError(f"power_moment requires power >= 0, got {power}")
    q = power / (2.0 * k)
    log_ratio = (
        -q * math.log(beta)
        + math.lgamma(lam + q)
        + math.log(reg_lower_gamma(lam + q, beta))
        - math.lgamma(lam)
        - math.log(reg_lower_gamma(lam, beta))
    )
    return math.exp(log_ratio)


def expected_log_v(lam: float, beta: float, step: float = 1e-5) -> float:
    """E[ln v] for v ~ Gamma(lam, rate beta) truncated to [0, 1].

    Computed as the lam-derivative (central difference) of the log of the
    unnormalized mass beta**(-lam) Gamma(lam) P(lam, beta); the density is an
    exponential family in lam with sufficient statistic ln v.
    """
    _require_positive(lam=lam, beta=beta)
    if step <= 0.0 or step >= lam:
        step = min(1e-5, 0.5 * lam)

    def log_mass(a: float) -> float:
        return -a * math.log(beta) + math.lgamma(a) + math.log(reg_lower_gamma(a, beta))

    return (log_mass(lam + step) - log_mass(lam - step)) / (2.0 * step)


def _require_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not value > 0.0:
            raise ValueError(f"{name} must be positive, got {name}={value}")
