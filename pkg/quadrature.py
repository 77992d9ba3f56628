# quadrature.py

import itertools
import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.special import logsumexp

import config
from errors import ConvergenceError, DivergentIntegralError

logger = logging.getLogger(__name__)

# Integrands are passed around in log form: log_f(points[M, n]) -> array[M].
LogIntegrand = Callable[[np.ndarray], np.ndarray]

_MAX_RADIUS = 1e7


@lru_cache(maxsize=64)
def gauss_legendre_unit(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = leggauss(nodes)
    return (x + 1.0) / 2.0, w / 2.0


class QuadratureRule:
    """A fixed set of points with log-weights; integrals are log-sum-exp reductions."""

    def __init__(self, points: np.ndarray, log_weights: np.ndarray, level: Optional[int] = None):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.log_weights = np.asarray(log_weights, dtype=float)
        self.level = level
        # set by adaptive_rule: relative change between the last two levels
        self.converged = True
        self.change: Optional[float] = None

    @property
    def size(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def log_integrate(self, log_values: np.ndarray) -> float:
        """log ∫ exp(log_values) for values sampled on self.points."""
        terms = np.asarray(log_values, dtype=float) + self.log_weights
        if not np.any(np.isfinite(terms)):
            return -np.inf
        return float(logsumexp(terms))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(np.asarray(values, dtype=float), self.weights))


def composite_rule(lo: Sequence[float], hi: Sequence[float], level: int,
                   order: Optional[int] = None) -> QuadratureRule:
    """Tensor composite Gauss-Legendre rule with 2**level panels per axis."""
    order = order or config.get_setting("quadrature_order")
    t, w = gauss_legendre_unit(order)
    panels = 2 ** level
    axes, axis_log_w = [], []
    for a, b in zip(lo, hi):
        edges = np.linspace(a, b, panels + 1)
        widths = np.diff(edges)
        axes.append((edges[:-1, None] + widths[:, None] * t[None, :]).ravel())
        axis_log_w.append(np.log((widths[:, None] * w[None, :]).ravel()))
    grids = np.meshgrid(*axes, indexing='ij')
    points = np.stack([g.ravel() for g in grids], axis=-1)
    log_grids = np.meshgrid(*axis_log_w, indexing='ij')
    log_weights = np.sum([g.ravel() for g in log_grids], axis=0)
    return QuadratureRule(points, log_weights, level=level)


def ray_directions(dim: int) -> np.ndarray:
    """Unit directions used to march out of a superlevel set."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    dirs = np.array([d for d in itertools.product((-1.0, 0.0, 1.0), repeat=dim) if any(d)])
    return dirs / np.linalg.norm(dirs, axis=1)[:, None]


def safe_eval(log_f: LogIntegrand, points: np.ndarray) -> np.ndarray:
    values = np.asarray(log_f(np.atleast_2d(points)), dtype=float)
    return np.where(np.isnan(values), -np.inf, values)


def find_peak(log_f: LogIntegrand, dim: int, starts: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """Locates the maximum of a (roughly log-concave) integrand."""
    if starts is None or len(starts) == 0:
        starts = np.zeros((1, dim))
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    start_values = safe_eval(log_f, starts)
    best = int(np.argmax(start_values))
    x_best, v_best = starts[best].copy(), float(start_values[best])

    def objective(x):
        v = safe_eval(log_f, x[None, :])[0]
        return -v if np.isfinite(v) else 1e300

    result = minimize(objective, x_best, method='BFGS')
    if np.all(np.isfinite(result.x)):
        value = float(safe_eval(log_f, result.x[None, :])[0])
        if value > v_best:
            x_best, v_best = result.x, value
    if np.linalg.norm(x_best) > _MAX_RADIUS or not np.isfinite(v_best):
        raise DivergentIntegralError("integrand has no finite peak")
    return x_best, v_best


def _march(log_f: LogIntegrand, center: np.ndarray, directions: np.ndarray, threshold: float) -> np.ndarray:
    """Distance along each ray at which log_f first drops below threshold."""
    t_hi = np.full(len(directions), 0.5)
    active = np.ones(len(directions), dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        values = safe_eval(log_f, center[None, :] + t_hi[idx, None] * directions[idx])
        still_above = values > threshold
        t_hi[idx[still_above]] *= 2.0
        active[idx[~still_above]] = False
        if np.any(t_hi > _MAX_RADIUS):
            raise DivergentIntegralError("integrand does not decay along a ray")
    t_lo = np.where(t_hi > 0.5, t_hi / 2.0, 0.0)
    for _ in range(30):
        mid = 0.5 * (t_lo + t_hi)
        values = safe_eval(log_f, center[None, :] + mid[:, None] * directions)
        above = values > threshold
        t_lo = np.where(above, mid, t_lo)
        t_hi = np.where(above, t_hi, mid)
    return t_hi


def find_box(log_f: LogIntegrand, dim: int, starts: Optional[np.ndarray] = None,
             window: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, float]:
    """Bounding box of the region where log_f is within `window` of its peak."""
    window = window if window is not None else config.get_setting("quadrature_window")
    peak, peak_value = find_peak(log_f, dim, starts)
    threshold = peak_value - window
    centers = [peak]
    if starts is not None:
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
        above = safe_eval(log_f, starts) > threshold
        centers.extend(starts[above])
    directions = ray_directions(dim)
    corners = []
    for center in centers:
        reach = _march(log_f, center, directions, threshold)
        corners.append(center[None, :] + reach[:, None] * directions)
        corners.append(center[None, :])
    corners = np.concatenate(corners, axis=0)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    margin = 0.1 * (hi - lo) + 1e-3
    return lo - margin, hi + margin, peak_value


def adaptive_rule(log_f: LogIntegrand, dim: int, box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
                  starts: Optional[np.ndarray] = None, rtol: Optional[float] = None,
                  window: Optional[float] = None, min_level: Optional[int] = None,
                  max_level: Optional[int] = None, strict: Optional[bool] = None) -> Tuple[QuadratureRule, float]:
    """
    Builds a composite Gauss-Legendre rule adapted to log_f by level doubling.

    Args:
        log_f: vectorized log of a nonnegative integrand on R^dim.
        box: integration box; located from the peak by ray marching when omitted.
        starts: extra seed points for multimodal integrands.
        strict: raise instead of flagging when rtol is missed at max_level
            (defaults to the `quadrature_strict` setting).

    Returns:
        (rule, log of the integral estimate on the finest level used). The
        rule's `converged` is False when rtol was not reached.

    Raises:
        ConvergenceError: rtol missed at max_level under the strict setting.
    """
    settings = config.load_settings()
    rtol = rtol if rtol is not None else settings["quadrature_rtol"]
    min_level = min_level if min_level is not None else settings["quadrature_min_level"]
    max_level = max_level if max_level is not None else settings["quadrature_max_level"]
    strict = strict if strict is not None else settings.get("quadrature_strict", False)
    if box is None:
        lo, hi, _ = find_box(log_f, dim, starts, window)
    else:
        lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)

    previous = None
    trace = []
    for level in range(min_level, max_level + 1):
        rule = composite_rule(lo, hi, level, settings["quadrature_order"])
        estimate = rule.log_integrate(safe_eval(log_f, rule.points))
        if previous is not None:
            if estimate == -np.inf and previous == -np.inf:
                rule.change = 0.0
                return rule, estimate
            rule.change = float(abs(np.expm1(estimate - previous)))
            if rule.change <= rtol:
                return rule, estimate
        trace.append({"level": level, "log_estimate": estimate, "change": rule.change})
        previous = estimate
    rule.converged = False
    message = ("Quadrature did not reach rtol %.1e at level %d (change %.1e, box %s..%s)"
               % (rtol, max_level, rule.change if rule.change is not None else np.nan,
                  np.round(lo, 3), np.round(hi, 3)))
    if strict:
        raise ConvergenceError(message, trace, rule.change)
    logger.warning(message)
    return rule, estimate


# --- Simplex cubature (Grundmann-Moeller) ---

@lru_cache(maxsize=16)
def simplex_rule(dim: int, degree_half: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Grundmann-Moeller cubature on the dim-simplex, exact to degree 2*degree_half+1.

    Returns barycentric points (M, dim+1) and weights summing to 1, so that
    ∫_S f ≈ vol(S) * Σ w f(point).
    """
    s, n = degree_half, dim
    d = 2 * s + 1
    table = {}
    for i in range(s + 1):
        weight = ((-1) ** i * 2.0 ** (-2 * s) * (d + n - 2 * i) ** d
                  / math.factorial(i) / math.factorial(d + n - i))
        denominator = d + n - 2 * i
        for beta in itertools.product(range(s - i + 1), repeat=n + 1):
            if sum(beta) != s - i:
                continue
            point = tuple((2 * b + 1) / denominator for b in beta)
            table[point] = table.get(point, 0.0) + weight
    points = np.array(list(table.keys()))
    weights = np.array(list(table.values())) * math.factorial(n)
    return points, weights


def integrate_on_simplex(f: Callable[[np.ndarray], np.ndarray], vertices: np.ndarray,
                         degree_half: int = 4) -> float:
    """∫_S f for a simplex given by its (n+1, n) vertex array."""
    vertices = np.asarray(vertices, dtype=float)
    dim = vertices.shape[1]
    volume = simplex_volume(vertices)
    if volume == 0.0:
        return 0.0
    bary, weights = simplex_rule(dim, degree_half)
    points = bary @ vertices
    return float(volume * np.dot(weights, f(points)))


def simplex_volume(vertices: np.ndarray) -> float:
    vertices = np.asarray(vertices, dtype=float)
    dim = vertices.shape[1]
    edges = vertices[1:] - vertices[0]
    return abs(float(np.linalg.det(edges))) / math.factorial(dim)


def integrate_on_segment(f: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray,
                         nodes: int = 16) -> float:
    """∫ over the straight segment [a, b] with respect to arc length."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length == 0.0:
        return 0.0
    t, w = gauss_legendre_unit(nodes)
    points = a[None, :] + t[:, None] * (b - a)[None, :]
    return length * float(np.dot(w, f(points)))
