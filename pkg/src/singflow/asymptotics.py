"""Coefficient extraction and the singular-asymptotics verification lab.

The lab lives on a two-parameter tanh regression: y = a * tanh(b * x) + noise
with x uniform on [0, 1] and uniform prior on the unit square. Its
truth-at-origin KL divergence is K(a, b) = a^2 b^2 K0(b) / 2 with
K0(b) the mean squared slope-squashing factor; the change of variables
(xi1, xi2) = (sqrt(K0/2) * a, b) turns K into the monomial xi1^2 xi2^2, so the
evidence integral decays like n^(-1/2) * log n and both facts are checkable
numerically.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import special
from .kernels import evidence_integrand_grid, squashed_slope_moment
from .quad import adaptive_gk_1d, adaptive_gk_2d, gauss_legendre_unit, log_integral_2d
from .triplets import LOG_2PI

_GL64_X, _GL64_W = gauss_legendre_unit(64)
_GL128_X, _GL128_W = gauss_legendre_unit(128)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_mvfe_coeff(points) -> FitResult:
    """OLS of mean MVFE on log n (with intercept); the slope estimates the
    log n coefficient of the free-energy expansion."""
    pts = sorted(set((float(n), float(y)) for n, y in points))
    ns = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if len(set(ns.tolist())) < 3:
        raise ValueError("fit_mvfe_coeff needs at least 3 distinct n values")
    x = np.log(ns)
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, rank, _ = np.linalg.lstsq(design, ys, rcond=None)
    if rank < 2:
        raise ValueError("degenerate design: log n values are collinear")
    fitted = design @ coef
    ss_res = float(((ys - fitted) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return FitResult(slope=float(coef[0]), intercept=float(coef[1]),
                     r_squared=r2, n_points=len(pts))


def fit_vge_coeff(points) -> FitResult:
    """Least squares of VGE on 1/n through the origin; R^2 is computed
    against the zero-intercept model (uncentered)."""
    pts = sorted(set((float(n), float(y)) for n, y in points))
    ns = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if len(set(ns.tolist())) < 2:
        raise ValueError("fit_vge_coeff needs at least 2 distinct n values")
    x = 1.0 / ns
    slope = float((x @ ys) / (x @ x))
    ss_res = float(((ys - slope * x) ** 2).sum())
    ss_tot = float((ys ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return FitResult(slope=slope, intercept=0.0, r_squared=r2, n_points=len(pts))


def fit_evidence_decay(ns, log_zs) -> dict:
    """Regress -log Z(n) on (log n, log log n, 1).

    Returns the decay exponent estimate, the fitted log log n order (the
    multiplicity minus one), and the intercept.
    """
    ns = np.asarray(ns, dtype=np.float64)
    log_zs = np.asarray(log_zs, dtype=np.float64)
    x = np.log(ns)
    design = np.column_stack([x, np.log(x), np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, -log_zs, rcond=None)
    return {
        "lambda_hat": float(coef[0]),
        "m_minus_1_hat": float(-coef[1]),
        "intercept": float(coef[2]),
    }


# --- the 2D toy -------------------------------------------------------------

def toy_k0(b) -> np.ndarray | float:
    """Mean of (tanh(b x)/b)^2 over x in [0, 1]; limit 1/3 as b -> 0."""
    arr = np.atleast_1d(np.asarray(b, dtype=np.float64))
    out = squashed_slope_moment(arr, _GL64_X, _GL64_W)
    return float(out[0]) if np.asarray(b).ndim == 0 else out


def toy_K(a: float, b: float) -> float:
    """KL divergence to the truth-at-origin for weights (a, b)."""
    return 0.5 * a * a * b * b * float(toy_k0(b))


def toy_resolution_check(a: float, b: float) -> float:
    """|K(a, b) - xi1^2 xi2^2| under (xi1, xi2) = (sqrt(K0/2) a, b)."""
    k0 = float(toy_k0(b))
    xi1 = math.sqrt(0.5 * k0) * a
    xi2 = b
    return abs(toy_K(a, b) - xi1 * xi1 * xi2 * xi2)


def quad_logZK(n: float, tol_rel: float = 1e-9, gl_order: int = 64,
               max_panels: int = 60000) -> float:
    """log of the evidence-style integral of exp(-n K) over the unit square.

    Tensorized adaptive Gauss-Kronrod; refinement piles up along the axes
    where the integrand's boundary layer sits.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if gl_order == 64:
        glx, glw = _GL64_X, _GL64_W
    else:
        glx, glw = gauss_legendre_unit(gl_order)

    def f2(a_nodes, b_nodes):
        k0 = squashed_slope_moment(np.ascontiguousarray(b_nodes), glx, glw)
        return evidence_integrand_grid(np.ascontiguousarray(a_nodes),
                                       np.ascontiguousarray(b_nodes), k0, float(n))

    value, _ = adaptive_gk_2d(f2, (0.0, 1.0, 0.0, 1.0), tol_abs=1e-14,
                              tol_rel=tol_rel, max_panels=max_panels)
    return math.log(value)


def _expected_log_v_quadrature(lam: float, beta: float) -> float:
    """E[ln v] for v ~ Gamma(lam, beta) on [0, 1], via u = sqrt(v) quadrature."""
    log_mass = (-lam * math.log(beta) + math.lgamma(lam)
                + math.log(special.reg_lower_gamma(lam, beta)))

    def integrand(u):
        u = np.maximum(u, 1e-300)
        return 4.0 * np.log(u) * u ** (2.0 * lam - 1.0) * np.exp(-beta * u * u)

    numerator, _ = adaptive_gk_1d(integrand, 0.0, 1.0, tol_abs=1e-13,
                                  tol_rel=1e-11, max_panels=8000)
    return numerator / math.exp(log_mass)


def psi_lower_bound_toy(n: float) -> float:
    """Lower bound on the optimal idealized-family objective for the toy.

    Uses the known standard form (k = (1, 1), h = (0, 0), decay exponent 1/2),
    base parameters (1/2, 1, n) on the singular coordinate and (1, 1, d/2) on
    the rest, and the conservative inf-of-Jacobian constant in place of the
    exact E[log b(xi)] term.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    coords = [(0.5, 1.0, float(n)), (1.0, 1.0, 1.0)]
    e1 = n
    entropy = 0.0
    for lam, k, beta in coords:
        e1 *= special.g_moment(lam, beta)
        e_log_v = _expected_log_v_quadrature(lam, beta)
        entropy += (
            -(2.0 * k * lam - 1.0) * e_log_v / (2.0 * k)
            + beta * special.g_moment(lam, beta)
            + special.log_b_normalizer(lam, k, beta)
        )
    # inf over the chart of the Jacobian factor sqrt(2 / K0)
    k0_max = float(np.max(toy_k0(np.linspace(0.0, 1.0, 1001))))
    log_b0 = 0.5 * math.log(2.0 / k0_max)
    return -e1 + entropy + log_b0


# --- posterior grids for the contour figure ---------------------------------

def toy_generate_data(truth: tuple[float, float], n: int, seed):
    """Toy regression draws: x ~ U[0,1], y = a0 tanh(b0 x) + unit noise."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a0, b0 = truth
    x = rng.uniform(0.0, 1.0, n)
    y = a0 * np.tanh(b0 * x) + rng.standard_normal(n)
    return x, y


def posterior_grid(truth: tuple[float, float], n: int, seed,
                   a_range=(-2.0, 2.0), b_range=(-2.0, 2.0), size: int = 200):
    """Normalized posterior density of the toy model on a tensor grid.

    Returns (a_axis, b_axis, density) with density[i, j] at (b_i, a_j) and
    trapezoidal total mass 1.
    """
    if size < 50:
        raise ValueError(f"grid resolution must be >= 50, got {size}")
    x, y = toy_generate_data(truth, n, seed)
    a_axis = np.linspace(a_range[0], a_range[1], size)
    b_axis = np.linspace(b_range[0], b_range[1], size)
    log_post = _toy_loglik_grid(x, y, a_axis, b_axis)  # uniform prior on the box
    log_post -= log_post.max()
    density = np.exp(log_post)
    mass = np.trapezoid(np.trapezoid(density, a_axis, axis=1), b_axis)
    density /= mass
    return a_axis, b_axis, density


def _toy_loglik_grid(x, y, a_axis, b_axis) -> np.ndarray:
    """Dataset log likelihood of y = a tanh(b x) + N(0,1) on the (b, a) grid."""
    n = x.shape[0]
    yy = float(y @ y)
    out = np.empty((b_axis.size, a_axis.size))
    base = -0.5 * n * LOG_2PI
    for i, b in enumerate(b_axis):
        t = np.tanh(b * x)
        yt = float(y @ t)
        tt = float(t @ t)
        out[i] = base - 0.5 * (yy - 2.0 * a_axis * yt + a_axis ** 2 * tt)
    return out


def toy_excess_risk_grid(a_axis, b_axis, truth: tuple[float, float]) -> np.ndarray:
    """K(w) - K(w0) style excess risk of the toy on the (b, a) grid."""
    a0, b0 = truth
    f0 = a0 * np.tanh(b0 * _GL64_X)
    out = np.empty((b_axis.size, a_axis.size))
    for i, b in enumerate(b_axis):
        t = np.tanh(b * _GL64_X)
        diff = a_axis[:, None] * t[None, :] - f0[None, :]
        out[i] = 0.5 * (diff * diff) @ _GL64_W
    return out


def grid_mass_within(density, a_axis, b_axis, mask) -> float:
    """Riemann mass of the density over a boolean region of the grid."""
    da = a_axis[1] - a_axis[0]
    db = b_axis[1] - b_axis[0]
    return float(density[mask].sum() * da * db)


# --- stochastic free energy for two-parameter tanh triplets ------------------

def tanh1_normalized_free_energy(triplet, data, box=(-8.0, 8.0),
                                 tol_rel: float = 1e-8) -> float:
    """Normalized free energy -log Z(n) - n S_n for the H = 1 tanh family.

    The model is f(x, w) = w2 tanh(w1 x) with standard Gaussian prior; the
    two-dimensional evidence integral is done by adaptive quadrature, so this
    is a flow-free reference value for anything trained on the same dataset.
    """
    if triplet.kind not in ("tanh", "tanh_zero_mean") or triplet.H != 1:
        raise ValueError("quadrature free energy only covers the H = 1 tanh family")
    x = data.inputs[:, 0]
    y = data.targets[:, 0]
    n = x.shape[0]
    yy = float(y @ y)

    def log_f2(w1_nodes, w2_nodes):
        t = np.tanh(x[:, None] * w1_nodes[None, :])       # (n, p)
        yt = y @ t                                        # (p,)
        tt = (t * t).sum(axis=0)                          # (p,)
        loglik = (-0.5 * n * LOG_2PI
                  - 0.5 * (yy - 2.0 * w2_nodes[:, None] * yt[None, :]
                           + (w2_nodes ** 2)[:, None] * tt[None, :]))
        log_prior = (-LOG_2PI
                     - 0.5 * (w1_nodes[None, :] ** 2 + w2_nodes[:, None] ** 2))
        return loglik + log_prior

    log_z = log_integral_2d(log_f2, (box[0], box[1], box[0], box[1]),
                            tol_rel=tol_rel)
    from .triplets import empirical_entropy
    s_n = empirical_entropy(triplet, data)
    return -log_z - n * s_n
