"""Adaptive Gauss-Kronrod quadrature, 1D and tensorized 2D.

Panels carry a 7/15 embedded error estimate; refinement always splits the
worst panel, which concentrates nodes wherever the integrand develops
boundary layers (for the evidence integrals that is along the axes of the
zero set). Integrand callbacks are vectorized over node arrays.
"""

import heapq
import math

import numpy as np

# 15-point Kronrod extension of 7-point Gauss (positive half, center last)
_XGK_HALF = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
])
_WGK_HALF = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
])
_WG_HALF = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
])

XGK = np.concatenate([-_XGK_HALF[:-1], _XGK_HALF[::-1]])          # ascending, 15
WGK = np.concatenate([_WGK_HALF[:-1], _WGK_HALF[::-1]])
GAUSS_IDX = np.arange(1, 15, 2)                                    # embedded 7 nodes
WG = np.concatenate([_WG_HALF[:-1], _WG_HALF[::-1]])


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def gauss_legendre_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_1d(f, a: float, b: float) -> tuple[float, float]:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = f(mid + half * XGK)
    i15 = half * float(WGK @ vals)
    i7 = half * float(WG @ vals[GAUSS_IDX])
    return i15, abs(i15 - i7)


def adaptive_gk_1d(f, a: float, b: float, tol_abs: float = 1e-12,
                   tol_rel: float = 1e-10, max_panels: int = 4000) -> tuple[float, float]:
    """Integrate vectorized f over [a, b]; returns (value, error estimate)."""
    i0, e0 = _panel_1d(f, a, b)
    heap = [(-e0, 0, a, b, i0, e0)]
    total_i, total_err = i0, e0
    counter = 1
    while total_err > max(tol_abs, tol_rel * abs(total_i)):
        if len(heap) >= max_panels:
            raise QuadratureError("1d quadrature did not converge", total_err)
        neg_err, _, pa, pb, pi, pe = heapq.heappop(heap)
        total_i -= pi
        total_err -= pe
        mid = 0.5 * (pa + pb)
        for qa, qb in ((pa, mid), (mid, pb)):
            qi, qe = _panel_1d(f, qa, qb)
            heapq.heappush(heap, (-qe, counter, qa, qb, qi, qe))
            counter += 1
            total_i += qi
            total_err += qe
    return total_i, total_err


def _panel_2d(f2, ax0, ax1, bx0, bx1) -> tuple[float, float]:
    amid, ahalf = 0.5 * (ax0 + ax1), 0.5 * (ax1 - ax0)
    bmid, bhalf = 0.5 * (bx0 + bx1), 0.5 * (bx1 - bx0)
    grid = f2(amid + ahalf * XGK, bmid + bhalf * XGK)  # rows: b, cols: a
    scale = ahalf * bhalf
    i15 = scale * float(WGK @ grid @ WGK)
    i7 = scale * float(WG @ grid[np.ix_(GAUSS_IDX, GAUSS_IDX)] @ WG)
    return i15, abs(i15 - i7)


def adaptive_gk_2d(f2, box, tol_abs: float = 1e-12, tol_rel: float = 1e-9,
                   max_panels: int = 60000) -> tuple[float, float]:
    """Integrate f2(a_nodes, b_nodes) -> (len(b), len(a)) grid over box.

    box = (a_lo, a_hi, b_lo, b_hi). The worst panel is split along its longer
    side each round.
    """
    a_lo, a_hi, b_lo, b_hi = box
    i0, e0 = _panel_2d(f2, a_lo, a_hi, b_lo, b_hi)
    heap = [(-e0, 0, a_lo, a_hi, b_lo, b_hi, i0, e0)]
    total_i, total_err = i0, e0
    counter = 1
    while total_err > max(tol_abs, tol_rel * abs(total_i)):
        if len(heap) >= max_panels:
            raise QuadratureError("2d quadrature did not converge", total_err)
        _, _, pa0, pa1, pb0, pb1, pi, pe = heapq.heappop(heap)
        total_i -= pi
        total_err -= pe
        if (pa1 - pa0) >= (pb1 - pb0):
            mid = 0.5 * (pa0 + pa1)
            children = ((pa0, mid, pb0, pb1), (mid, pa1, pb0, pb1))
        else:
            mid = 0.5 * (pb0 + pb1)
            children = ((pa0, pa1, pb0, mid), (pa0, pa1, mid, pb1))
        for qa0, qa1, qb0, qb1 in children:
            qi, qe = _panel_2d(f2, qa0, qa1, qb0, qb1)
            heapq.heappush(heap, (-qe, counter, qa0, qa1, qb0, qb1, qi, qe))
            counter += 1
            total_i += qi
            total_err += qe
    return total_i, total_err


def log_integral_2d(log_f2, box, tol_rel: float = 1e-9,
                    max_panels: int = 60000) -> float:
    """log of a 2D integral of exp(log_f2), shifted by the peak for stability.

    log_f2(a_nodes, b_nodes) returns the log integrand on the tensor grid.
    The peak is located on a coarse scan; the shifted integrand is then at
    most 1 so the absolute tolerance floor is meaningful.
    """
    a_lo, a_hi, b_lo, b_hi = box
    a_scan = np.linspace(a_lo, a_hi, 201)
    b_scan = np.linspace(b_lo, b_hi, 201)
    shift = float(np.max(log_f2(a_scan, b_scan)))

    def f2(a_nodes, b_nodes):
        return np.exp(log_f2(a_nodes, b_nodes) - shift)

    value, _ = adaptive_gk_2d(f2, box, tol_abs=1e-14, tol_rel=tol_rel,
                              max_panels=max_panels)
    if value <= 0.0:
        raise QuadratureError("2d integral collapsed to zero mass", math.inf)
    return shift + math.log(value)
