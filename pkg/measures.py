# measures.py

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

import quadrature
from errors import InputError
from polytope import (ConvexRegion, LatticePolytope, divided_difference_exp,
                      integrate_exp_linear_simplices, simplex_decomposition, volume)

logger = logging.getLogger(__name__)

G_KINDS = ("constant", "exp_linear", "step", "table")


@dataclass(frozen=True, eq=False)
class GWeight:
    """
    A nonnegative weight g on P, g(p) = raw(p) / normalization.

    kinds: constant, exp_linear (raw = e^{⟨p,ξ⟩}), step (raw = 1_{p ≥ λ}),
    table (piecewise-linear interpolation of samples on a grid over P).
    """

    kind: str = "constant"
    xi: Optional[Tuple[float, ...]] = None
    lam: Optional[Tuple[float, ...]] = None
    table_axes: Optional[Tuple[np.ndarray, ...]] = None
    table_values: Optional[np.ndarray] = None
    normalization: float = 1.0
    _interpolator: Optional[RegularGridInterpolator] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in G_KINDS:
            raise InputError("unknown weight kind %r" % self.kind)
        if self.normalization <= 0:
            raise InputError("weight normalization must be positive")
        if self.kind == "table":
            values = np.asarray(self.table_values, dtype=float)
            if np.any(values < 0):
                raise InputError("tabulated weight has negative samples")
            interpolator = RegularGridInterpolator(tuple(np.asarray(a, dtype=float) for a in self.table_axes),
                                                   values, bounds_error=False, fill_value=None)
            object.__setattr__(self, "_interpolator", interpolator)

    # --- constructors ---
    @classmethod
    def constant(cls, value: float = 1.0) -> "GWeight":
        return cls("constant", normalization=1.0 / value)

    @classmethod
    def exp_linear(cls, xi: Sequence[float], normalization: float = 1.0) -> "GWeight":
        return cls("exp_linear", xi=tuple(float(x) for x in np.ravel(xi)), normalization=normalization)

    @classmethod
    def step(cls, lam: Sequence[float]) -> "GWeight":
        return cls("step", lam=tuple(float(x) for x in np.ravel(lam)))

    @classmethod
    def table(cls, axes: Sequence[Sequence[float]], values: np.ndarray) -> "GWeight":
        return cls("table", table_axes=tuple(np.asarray(a, dtype=float) for a in axes),
                   table_values=np.asarray(values, dtype=float))

    # --- evaluation ---
    def raw(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            return np.ones(len(points))
        if self.kind == "exp_linear":
            return np.exp(points @ np.asarray(self.xi))
        if self.kind == "step":
            return np.all(points >= np.asarray(self.lam), axis=1).astype(float)
        return np.maximum(self._interpolator(points), 0.0)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.raw(points) / self.normalization

    def log(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "exp_linear":
            return points @ np.asarray(self.xi) - np.log(self.normalization)
        with np.errstate(divide='ignore'):
            return np.log(self(points))

    # --- integration over subsets of P (Lebesgue dp, not normalized by vol P) ---
    def integrate_region(self, region: ConvexRegion) -> float:
        if region.is_empty:
            return 0.0
        if self.kind == "constant":
            value = region.volume()
        elif self.kind == "exp_linear":
            value = integrate_exp_linear_simplices(region.simplices(), self.xi)
        elif self.kind == "step":
            dim = region.dim
            normals = -np.eye(dim)
            value = region.clip_many(normals, -np.asarray(self.lam)).volume()
        else:
            value = sum(quadrature.integrate_on_simplex(self.raw, s) for s in region.simplices())
        return value / self.normalization

    def integrate_simplices(self, simplices: Sequence[np.ndarray]) -> float:
        """∫ g dp over a union of simplices with disjoint interiors."""
        if not simplices:
            return 0.0
        dim = np.asarray(simplices[0]).shape[1]
        if self.kind == "constant":
            value = sum(quadrature.simplex_volume(s) for s in simplices)
        elif self.kind == "exp_linear":
            value = integrate_exp_linear_simplices(simplices, self.xi)
        elif self.kind == "step":
            if dim > 2:
                raise InputError("step weights are supported in dimensions 1 and 2")
            return sum(self.integrate_region(ConvexRegion.from_simplex(s)) for s in simplices)
        else:
            value = sum(quadrature.integrate_on_simplex(self.raw, s) for s in simplices)
        return value / self.normalization

    def integrate_affine(self, simplices: Sequence[np.ndarray], slope: Sequence[float], offset: float) -> float:
        """∫ (⟨p, slope⟩ + offset) g(p) dp over a union of simplices."""
        slope = np.asarray(slope, dtype=float)
        total = 0.0
        for simplex in simplices:
            simplex = np.asarray(simplex, dtype=float)
            dim = simplex.shape[1]
            if self.kind == "constant":
                total += quadrature.simplex_volume(simplex) * (float(simplex.mean(axis=0) @ slope) + offset)
            elif self.kind == "exp_linear":
                total += offset * integrate_exp_linear_simplices([simplex], self.xi)
                for i in range(dim):
                    moment = tuple(1 if j == i else 0 for j in range(dim))
                    total += slope[i] * integrate_exp_linear_simplices([simplex], self.xi, moment)
            elif self.kind == "step":
                clipped = ConvexRegion.from_simplex(simplex).clip_many(-np.eye(dim), -np.asarray(self.lam))
                total += GWeight.constant().integrate_affine(clipped.simplices(), slope, offset)
            else:
                total += quadrature.integrate_on_simplex(lambda p: (p @ slope + offset) * self.raw(p), simplex)
        return total / self.normalization

    def integrate_segment(self, a: np.ndarray, b: np.ndarray) -> float:
        """∫ g dσ over the segment [a, b] (arc length)."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            return 0.0
        if self.kind == "constant":
            value = length
        elif self.kind == "exp_linear":
            xi = np.asarray(self.xi)
            value = length * divided_difference_exp([a @ xi, b @ xi])
        elif self.kind == "step":
            t_lo, t_hi = 0.0, 1.0
            for ai, bi, li in zip(a, b, self.lam):
                slope = bi - ai
                if slope > 0:
                    t_lo = max(t_lo, (li - ai) / slope)
                elif slope < 0:
                    t_hi = min(t_hi, (li - ai) / slope)
                elif ai < li:
                    return 0.0
            value = length * max(0.0, t_hi - t_lo)
        else:
            value = quadrature.integrate_on_segment(self.raw, a, b)
        return value / self.normalization

    def integrate_polytope(self, polytope: LatticePolytope) -> float:
        """∫_P g dp."""
        if polytope.dim <= 2:
            return self.integrate_region(ConvexRegion.from_polytope(polytope))
        return self.integrate_simplices(simplex_decomposition(polytope).float_simplices())

    def mass(self, polytope: LatticePolytope) -> float:
        """∫_P g dν with ν the normalized Lebesgue measure on P."""
        return self.integrate_polytope(polytope) / volume(polytope)

    def normalized(self, polytope: LatticePolytope) -> "GWeight":
        """The same weight rescaled so that g dν is a probability measure."""
        total = self.mass(polytope)
        if total <= 0:
            raise InputError("weight %s has zero mass on P" % self.describe())
        return replace(self, normalization=self.normalization * total, _interpolator=None)

    def bounds(self, polytope: LatticePolytope) -> Tuple[float, float]:
        """(inf, sup) of g over P."""
        vertices = polytope.vertices
        if self.kind == "constant":
            value = 1.0 / self.normalization
            return value, value
        if self.kind == "exp_linear":
            values = self(vertices)
            return float(values.min()), float(values.max())
        if self.kind == "step":
            lam = np.asarray(self.lam)
            covers_all = bool(np.all(vertices.min(axis=0) >= lam))
            reachable = bool(np.all(vertices.max(axis=0) >= lam))
            return (1.0 if covers_all else 0.0) / self.normalization, (1.0 if reachable else 0.0) / self.normalization
        values = np.asarray(self.table_values) / self.normalization
        return float(values.min()), float(values.max())

    def describe(self) -> str:
        """CLI-style description: const, exp:ξ..., step:λ..., table:<digest of the samples>."""
        if self.kind == "constant":
            return "const"
        if self.kind == "exp_linear":
            return "exp:" + ",".join(repr(x) for x in self.xi)
        if self.kind == "step":
            return "step:" + ",".join(repr(x) for x in self.lam)
        return "table:" + self._table_digest()[:12]

    def _table_digest(self) -> str:
        hasher = hashlib.md5()
        for axis in self.table_axes:
            hasher.update(np.ascontiguousarray(axis, dtype=np.float64).tobytes())
        values = np.ascontiguousarray(self.table_values, dtype=np.float64)
        hasher.update(repr(values.shape).encode())
        hasher.update(values.tobytes())
        return hasher.hexdigest()

    def fingerprint(self) -> str:
        """Cache identity: describe() with the full sample digest, plus the normalization."""
        label = "table:" + self._table_digest() if self.kind == "table" else self.describe()
        return "%s/%r" % (label, self.normalization)


def parse_g(spec: str, dim: int) -> GWeight:
    """Parses --g {const, exp:ξ..., step:λ...}."""
    spec = (spec or "const").strip()
    if spec in ("const", "constant", "1"):
        return GWeight.constant()
    kind, _, values = spec.partition(":")
    try:
        numbers = [float(x) for x in values.split(",") if x.strip()]
    except ValueError:
        raise InputError("cannot parse weight specification %r" % spec)
    if len(numbers) != dim:
        raise InputError("weight %r needs %d components" % (spec, dim))
    if kind == "exp":
        return GWeight.exp_linear(numbers)
    if kind == "step":
        return GWeight.step(numbers)
    raise InputError("unknown weight specification %r" % spec)


# --- Measures on X (toric coordinates R^n) ---

@dataclass(eq=False)
class AtomicMeasure:
    """Weighted point masses Σ m_i δ_{x_i} on R^n."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(self.points) != len(self.masses):
            raise InputError("atom locations and masses differ in length")
        if np.any(self.masses < 0):
            raise InputError("atomic measure has negative masses")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def pair(self, u: Callable[[np.ndarray], np.ndarray]) -> float:
        """∫ u dμ."""
        if len(self.masses) == 0:
            return 0.0
        return float(np.dot(self.masses, u(self.points)))

    def normalized(self) -> "AtomicMeasure":
        return AtomicMeasure(self.points.copy(), self.masses / self.total_mass)

    def rows(self):
        for x, m in zip(self.points, self.masses):
            yield list(x) + [m]


DiscreteMeasure = AtomicMeasure


class DensityMeasure:
    """A measure ρ(x) dx on R^n (or on a box) given by its log-density."""

    def __init__(self, log_density: Callable[[np.ndarray], np.ndarray], dim: int,
                 box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
                 starts: Optional[np.ndarray] = None, rtol: Optional[float] = None,
                 max_level: Optional[int] = None, adapt_to: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.log_density = log_density
        self.adapt_to = adapt_to
        self.dim = dim
        self.box = box
        self.starts = starts
        self.rtol = rtol
        self.max_level = max_level
        self._rule = None

    @classmethod
    def from_density(cls, density: Callable[[np.ndarray], np.ndarray], dim: int,
                     box: Tuple[Sequence[float], Sequence[float]]) -> "DensityMeasure":
        """Wraps a plain density on a box; negative values become NaN log-densities."""
        def log_density(points):
            values = np.asarray(density(np.atleast_2d(points)), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(values < 0, np.nan, np.log(values))
        return cls(log_density, dim, box=box)

    def density(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(np.atleast_2d(points)))

    @property
    def rule(self) -> quadrature.QuadratureRule:
        if self._rule is None:
            self._rule, _ = quadrature.adaptive_rule(self.adapt_to or self.log_density, self.dim, box=self.box,
                                                     starts=self.starts, rtol=self.rtol,
                                                     max_level=self.max_level)
        return self._rule

    @property
    def converged(self) -> bool:
        """False when the adaptive rule stopped at max_level short of rtol."""
        return self.rule.converged

    @property
    def total_mass(self) -> float:
        rule = self.rule
        return float(np.exp(rule.log_integrate(self.log_density(rule.points))))

    def pair(self, u: Callable[[np.ndarray], np.ndarray]) -> float:
        """∫ u dμ by quadrature."""
        rule = self.rule
        weights = np.exp(self.log_density(rule.points) + rule.log_weights)
        return float(np.dot(weights, u(rule.points)))


MeasureOnX = (AtomicMeasure, DensityMeasure)
