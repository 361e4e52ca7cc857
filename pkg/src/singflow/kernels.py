"""Hot numeric kernels, JIT-compiled unless SINGFLOW_NUMBA=0.

Everything here is written in numba-compatible numpy so the same source runs
on both paths. Scalar incomplete-gamma routines follow the classic
series/continued-fraction split; the inverse is a bracketed Newton iteration
started from a Wilson-Hilferty guess.

benchmarks/bench_kernels.py times the two paths against each other.
"""

import math

import numpy as np

from ._accel import maybe_njit

GAMMA_TOL = 1e-14
GAMMA_MAX_ITER = 500
_TINY = 1e-300


@maybe_njit
def reg_lower_gamma_kernel(a, x):
    """Regularized lower incomplete gamma P(a, x).

    Returns (value, iterations, converged). Series for x < a+1, Lentz
    continued fraction otherwise.
    """
    if x <= 0.0:
        return 0.0, 0, True
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for n in range(1, GAMMA_MAX_ITER + 1):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * GAMMA_TOL:
                val = total * math.exp(-x + a * math.log(x) - lg)
                if val < 0.0:
                    val = 0.0
                elif val > 1.0:
                    val = 1.0
                return val, n, True
        return total * math.exp(-x + a * math.log(x) - lg), GAMMA_MAX_ITER, False
    # continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_TOL:
            q = math.exp(-x + a * math.log(x) - lg) * h
            val = 1.0 - q
            if val < 0.0:
                val = 0.0
            elif val > 1.0:
                val = 1.0
            return val, i, True
    return 1.0 - math.exp(-x + a * math.log(x) - lg) * h, GAMMA_MAX_ITER, False


@maybe_njit
def _norm_quantile(p):
    """Acklam's rational approximation to the standard normal quantile."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    q = math.sqrt(-2.0 * math.log(1.0 - p))
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)


@maybe_njit
def inv_reg_lower_gamma_kernel(a, p):
    """Invert P(a, .) at p in [0, 1). Returns (value, residual, converged).

    Newton from a Wilson-Hilferty start, with a hard bracket maintained so any
    wild step degrades to bisection.
    """
    if p <= 0.0:
        return 0.0, 0.0, True
    # Wilson-Hilferty initial guess
    z = _norm_quantile(p)
    w = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * math.sqrt(a))
    x = a * w * w * w
    if not (x > 0.0) or not math.isfinite(x):
        x = a * p  # crude but inside the bracket
    lo = 0.0
    hi = x if x > 1.0 else 1.0
    for _ in range(400):
        val, _, _ = reg_lower_gamma_kernel(a, hi)
        if val >= p:
            break
        lo = hi
        hi *= 2.0
    if x <= lo or x >= hi:
        x = 0.5 * (lo + hi)
    lg = math.lgamma(a)
    resid = 1.0
    for _ in range(200):
        val, _, _ = reg_lower_gamma_kernel(a, x)
        f = val - p
        resid = abs(f)
        if f < 0.0:
            lo = x
        else:
            hi = x
        if resid <= 1e-14 or (hi - lo) <= 1e-15 * (1.0 + x):
            break
        pdf = math.exp(-x + (a - 1.0) * math.log(x) - lg)
        if pdf > 0.0 and math.isfinite(pdf):
            step = f / pdf
            xn = x - step
        else:
            xn = 0.5 * (lo + hi)
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        x = xn
    return x, resid, resid <= 1e-10


@maybe_njit
def trunc_gamma_ppf_batch(a, cap_p, u):
    """Quantiles of a rate-1 gamma truncated to [0, cap]: invert P at u*P(a,cap)."""
    out = np.empty(u.shape[0])
    ok = True
    for i in range(u.shape[0]):
        v, _, conv = inv_reg_lower_gamma_kernel(a, u[i] * cap_p)
        out[i] = v
        ok = ok and conv
    return out, ok


# ---------------------------------------------------------------------------
# elementwise kernels for the autodiff ops

LEAKY_SLOPE = 0.01


@maybe_njit
def leaky_relu_fwd(x):
    return np.where(x >= 0.0, x, LEAKY_SLOPE * x)


@maybe_njit
def leaky_relu_vjp(x, g):
    return np.where(x >= 0.0, g, LEAKY_SLOPE * g)


@maybe_njit
def relu_fwd(x):
    return np.where(x > 0.0, x, 0.0)


@maybe_njit
def relu_vjp(x, g):
    return np.where(x > 0.0, g, 0.0)


@maybe_njit
def tanh_vjp(y, g):
    return g * (1.0 - y * y)


@maybe_njit
def coupling_combine_fwd(u, s, t, r):
    """Masked affine update: keep coords where r=0, scale-and-shift where r=1."""
    return (1.0 - r) * u + r * (u * np.exp(s) + t)


@maybe_njit
def coupling_combine_vjp(u, s, t, r, g):
    es = np.exp(s)
    du = g * ((1.0 - r) + r * es)
    ds = g * r * u * es
    dt = g * r
    return du, ds, dt


@maybe_njit
def adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps):
    """One in-place ADAM update on flat parameter arrays."""
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i in range(theta.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        theta[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)


# ---------------------------------------------------------------------------
# toy-model quadrature kernels

@maybe_njit
def squashed_slope_moment(b, glx, glw):
    """K0(b) = integral over [0,1] of (tanh(b x)/b)^2, Gauss-Legendre nodes glx/glw.

    b -> 0 limit is 1/3 (integrand tends to x^2).
    """
    out = np.empty(b.shape[0])
    for i in range(b.shape[0]):
        bi = b[i]
        if abs(bi) < 1e-6:
            out[i] = 1.0 / 3.0
            continue
        acc = 0.0
        for j in range(glx.shape[0]):
            th = math.tanh(bi * glx[j]) / bi
            acc += glw[j] * th * th
        out[i] = acc
    return out


@maybe_njit
def evidence_integrand_grid(a_nodes, b_nodes, k0_vals, n):
    """exp(-n * a^2 b^2 k0(b) / 2) evaluated on the tensor grid (b rows, a cols)."""
    out = np.empty((b_nodes.shape[0], a_nodes.shape[0]))
    for i in range(b_nodes.shape[0]):
        c = 0.5 * b_nodes[i] * b_nodes[i] * k0_vals[i] * n
        for j in range(a_nodes.shape[0]):
            out[i, j] = math.exp(-c * a_nodes[j] * a_nodes[j])
    return out
