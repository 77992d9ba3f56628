# potential.py

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError
from scipy.special import logsumexp, softmax

from errors import EmptyEnvelopeError, InputError, TieError
from measures import AtomicMeasure, DensityMeasure, GWeight
from polytope import ConvexRegion, LatticePolytope, volume

logger = logging.getLogger(__name__)

_TIE_TOL = 1e-12


def _as_points(x, dim: int):
    """Returns (points (M, dim), single) for a point or a batch of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if len(x) == dim:
            return x.reshape(1, dim), True
        if dim == 1:
            return x.reshape(-1, 1), False
        raise InputError("point of dimension %d for a potential on R^%d" % (len(x), dim))
    return x, False


@dataclass(frozen=True, eq=False)
class ToricPotential:
    """
    A torus-invariant metric as a convex function on R^n.

    Finite sharpness k: φ(x) = (1/k) log Σ_j exp(k(⟨p_j, x⟩ + a_j)), i.e.
    coefficients c_j = exp(k a_j). Infinite sharpness: φ(x) = max_j ⟨p_j, x⟩ + a_j.
    Intercepts a_j are stored so that changing the sharpness gives a family
    decreasing in k.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    sharpness: float = np.inf
    name: str = ""

    def __post_init__(self):
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        if slopes.shape[0] == 1 and np.asarray(self.slopes).ndim == 1 and len(np.ravel(self.intercepts)) > 1:
            slopes = slopes.reshape(-1, 1)
        intercepts = np.asarray(self.intercepts, dtype=float).reshape(-1)
        if len(slopes) != len(intercepts):
            raise InputError("potential has %d slopes but %d intercepts" % (len(slopes), len(intercepts)))
        if len(slopes) == 0:
            raise InputError("potential needs at least one slope")
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(intercepts))):
            raise InputError("potential data must be finite")
        if not self.sharpness > 0:
            raise InputError("sharpness must be positive, got %r" % (self.sharpness,))
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "sharpness", float(self.sharpness))

    # --- construction ---
    @classmethod
    def from_coefficients(cls, slopes, coefficients, sharpness: float = 1.0, name: str = "") -> "ToricPotential":
        coefficients = np.asarray(coefficients, dtype=float)
        if np.any(coefficients <= 0):
            raise InputError("coefficients must be positive")
        scale = 1.0 if np.isinf(sharpness) else float(sharpness)
        return cls(slopes, np.log(coefficients) / scale, sharpness, name)

    @classmethod
    def from_dict(cls, data: Dict) -> "ToricPotential":
        try:
            sharpness = data.get("sharpness", 1.0)
            sharpness = np.inf if str(sharpness).lower() in ("inf", "infinity") else float(sharpness)
            slopes = np.asarray(data["slopes"], dtype=float)
            if "intercepts" in data:
                return cls(slopes, data["intercepts"], sharpness, data.get("name", ""))
            coeffs = data.get("coeffs", [1.0] * len(slopes))
            return cls.from_coefficients(slopes, coeffs, sharpness, data.get("name", ""))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed potential JSON: {e}")

    def to_dict(self) -> Dict:
        return {
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
            "sharpness": "inf" if self.is_max_affine else self.sharpness,
            "name": self.name,
        }

    # --- basic properties ---
    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    @property
    def size(self) -> int:
        return len(self.intercepts)

    @property
    def is_max_affine(self) -> bool:
        return bool(np.isinf(self.sharpness))

    @property
    def coefficients(self) -> np.ndarray:
        scale = 1.0 if self.is_max_affine else self.sharpness
        return np.exp(scale * self.intercepts)

    def shift(self, c: float) -> "ToricPotential":
        return ToricPotential(self.slopes, self.intercepts + c, self.sharpness, self.name)

    def with_sharpness(self, sharpness: float) -> "ToricPotential":
        return ToricPotential(self.slopes, self.intercepts, sharpness, self.name)

    def max_affine(self) -> "ToricPotential":
        """The ∞-sharpness limit: drops the (1/k) log smoothing."""
        return self.with_sharpness(np.inf)

    def interpolate(self, other: "ToricPotential", t: float):
        return combine(self, other, t)

    # --- evaluation ---
    def affine_values(self, points: np.ndarray) -> np.ndarray:
        return points @ self.slopes.T + self.intercepts

    def values(self, points: np.ndarray) -> np.ndarray:
        affine = self.affine_values(np.atleast_2d(points))
        if self.is_max_affine:
            return affine.max(axis=1)
        return logsumexp(self.sharpness * affine, axis=1) / self.sharpness

    def __call__(self, x):
        points, single = _as_points(x, self.dim)
        values = self.values(points)
        return float(values[0]) if single else values

    def weights(self, points: np.ndarray) -> np.ndarray:
        """Softmax weights of the slopes (one-hot on the lowest maximizing index when max-affine)."""
        affine = self.affine_values(np.atleast_2d(points))
        if self.is_max_affine:
            one_hot = np.zeros_like(affine)
            one_hot[np.arange(len(affine)), affine.argmax(axis=1)] = 1.0
            return one_hot
        return softmax(self.sharpness * affine, axis=1)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self.weights(points) @ self.slopes

    def hessian(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.is_max_affine:
            return np.zeros((len(points), self.dim, self.dim))
        w = self.weights(points)
        mean = w @ self.slopes
        second = np.einsum('mj,ja,jb->mab', w, self.slopes, self.slopes)
        return self.sharpness * (second - np.einsum('ma,mb->mab', mean, mean))

    def log_det_hessian(self, points: np.ndarray) -> np.ndarray:
        sign, logdet = np.linalg.slogdet(self.hessian(points))
        return np.where(sign > 0, logdet, -np.inf)

    # --- geometry of the slope set ---
    def slopes_in(self, polytope: LatticePolytope, tol: float = 1e-12) -> bool:
        return bool(np.all(polytope.contains(self.slopes, tol=tol)))

    def has_full_mass(self, polytope: LatticePolytope, tol: float = 1e-12) -> bool:
        """conv{p_j} = P: slopes lie in P and every vertex of P is a slope."""
        if not self.slopes_in(polytope, tol):
            return False
        for vertex in polytope.vertices:
            if np.min(np.max(np.abs(self.slopes - vertex), axis=1)) > tol:
                return False
        return True


class PotentialCombination:
    """The convex combination (1 − t) φ0 + t φ1 of two smooth potentials."""

    is_max_affine = False

    def __init__(self, phi0, phi1, t: float):
        if phi0.dim != phi1.dim:
            raise InputError("cannot combine potentials on R^%d and R^%d" % (phi0.dim, phi1.dim))
        self.phi0, self.phi1, self.t = phi0, phi1, float(t)
        self.name = f"({1 - t:g})*{phi0.name or 'phi0'} + ({t:g})*{phi1.name or 'phi1'}"

    @property
    def dim(self) -> int:
        return self.phi0.dim

    @property
    def slopes(self) -> np.ndarray:
        return np.concatenate([self.phi0.slopes, self.phi1.slopes], axis=0)

    def values(self, points):
        return (1 - self.t) * self.phi0.values(points) + self.t * self.phi1.values(points)

    def __call__(self, x):
        points, single = _as_points(x, self.dim)
        values = self.values(points)
        return float(values[0]) if single else values

    def gradient(self, points):
        return (1 - self.t) * self.phi0.gradient(points) + self.t * self.phi1.gradient(points)

    def hessian(self, points):
        return (1 - self.t) * self.phi0.hessian(points) + self.t * self.phi1.hessian(points)

    def log_det_hessian(self, points):
        sign, logdet = np.linalg.slogdet(self.hessian(points))
        return np.where(sign > 0, logdet, -np.inf)

    def max_affine(self) -> ToricPotential:
        return minkowski_combination(self.phi0.max_affine(), self.phi1.max_affine(), self.t)

    def interpolate(self, other, t):
        return combine(self, other, t)


def minkowski_combination(phi0: ToricPotential, phi1: ToricPotential, t: float) -> ToricPotential:
    """(1 − t) φ0 + t φ1 for max-affine potentials, itself max-affine."""
    slopes = ((1 - t) * phi0.slopes[:, None, :] + t * phi1.slopes[None, :, :]).reshape(-1, phi0.dim)
    intercepts = ((1 - t) * phi0.intercepts[:, None] + t * phi1.intercepts[None, :]).reshape(-1)
    return prune(ToricPotential(slopes, intercepts, np.inf))


def combine(phi0, phi1, t: float):
    """Point on the affine segment from φ0 (t=0) to φ1 (t=1)."""
    if t == 0.0:
        return phi0
    if t == 1.0:
        return phi1
    if phi0.is_max_affine and phi1.is_max_affine:
        return minkowski_combination(phi0, phi1, t)
    if phi0.is_max_affine or phi1.is_max_affine:
        raise InputError("affine segments need both endpoints in the same representation")
    return PotentialCombination(phi0, phi1, t)


def maximum(phi: ToricPotential, psi: ToricPotential) -> ToricPotential:
    """max(φ, ψ) of two max-affine potentials."""
    if not (phi.is_max_affine and psi.is_max_affine):
        raise InputError("maximum is defined here for max-affine potentials")
    return prune(ToricPotential(np.concatenate([phi.slopes, psi.slopes]),
                                np.concatenate([phi.intercepts, psi.intercepts]), np.inf))


# --- Dual cells of a max-affine potential ---

@dataclass
class DualCell:
    """A vertex x_v of a max-affine φ with its subgradient cell ∂φ(x_v) ⊂ conv{p_j}."""

    vertex: np.ndarray
    value: float
    simplices: List[np.ndarray]
    slope_indices: np.ndarray


def _affine_rank(points: np.ndarray) -> int:
    if len(points) < 2:
        return 0
    return int(np.linalg.matrix_rank(points[1:] - points[0], tol=1e-12))


def _single_cell(slopes: np.ndarray, heights: np.ndarray) -> List[DualCell]:
    """All lifted slopes on one hyperplane: one vertex whose cell is conv{p_j}."""
    n = slopes.shape[1]
    design = np.column_stack([slopes, -np.ones(len(slopes))])
    solution, *_ = np.linalg.lstsq(design, heights, rcond=None)
    vertex, value = solution[:n], float(solution[n])
    if np.max(np.abs(design @ solution - heights)) > 1e-8 * (1 + np.max(np.abs(heights))):
        raise InputError("slope configuration is not coplanar and qhull could not triangulate it")
    if n == 1:
        simplices = [np.array([[slopes[:, 0].min()], [slopes[:, 0].max()]])]
    else:
        simplices = [slopes[s] for s in Delaunay(slopes).simplices]
    return [DualCell(vertex, value, simplices, np.arange(len(slopes)))]


def dual_cells(phi: ToricPotential) -> List[DualCell]:
    """
    Vertices of the polyhedral subdivision of R^n induced by max-affine φ.

    The lifted points (p_j, −a_j) have a lower convex hull; each lower facet with
    outward normal (ν_p, ν_h) and offset b is a cell of the dual subdivision of
    conv{p_j}, dual to the vertex x_v = −ν_p / ν_h with φ(x_v) = b / ν_h.
    """
    slopes, heights = phi.slopes, -phi.intercepts
    n = phi.dim
    if _affine_rank(slopes) < n:
        return []
    lifted = np.column_stack([slopes, heights])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        return _single_cell(slopes, heights)

    scale = 1.0 + np.max(np.abs(lifted))
    cells: List[DualCell] = []
    for facet, simplex in zip(hull.equations, hull.simplices):
        nu_h = facet[n]
        if nu_h > -1e-12:
            continue
        vertex = -facet[:n] / nu_h
        value = float(facet[n + 1] / nu_h)
        simplex_points = slopes[simplex]
        if abs(np.linalg.det(simplex_points[1:] - simplex_points[0])) <= 1e-14 * scale ** n:
            continue
        for cell in cells:
            if np.max(np.abs(cell.vertex - vertex)) <= 1e-8 * (1 + np.max(np.abs(vertex))):
                cell.simplices.append(simplex_points)
                cell.slope_indices = np.union1d(cell.slope_indices, simplex)
                break
        else:
            cells.append(DualCell(vertex, value, [simplex_points], np.array(sorted(simplex))))
    if not cells:
        return _single_cell(slopes, heights)
    return cells


def slope_hull_region(slopes: np.ndarray) -> ConvexRegion:
    """conv{p_j} as an exact region (dimensions 1 and 2)."""
    slopes = np.asarray(slopes, dtype=float)
    if slopes.shape[1] == 1:
        return ConvexRegion([(slopes[:, 0].min(),), (slopes[:, 0].max(),)], 1)
    if slopes.shape[1] > 2:
        raise InputError("cell clipping is implemented for dimensions 1 and 2, got %d" % slopes.shape[1])
    hull = ConvexHull(slopes)
    return ConvexRegion([tuple(slopes[i]) for i in hull.vertices], 2)


def dual_cell_regions(phi: ToricPotential, cells: Optional[List[DualCell]] = None) -> List[ConvexRegion]:
    """
    ∂φ(x_v) = {p ∈ conv{p_j} : ⟨p, x_w − x_v⟩ ≤ φ(x_w) − φ(x_v) for every vertex w}.

    On conv{p_j} the dual function is max_v ⟨p, x_v⟩ − φ(x_v), so these cells
    tile the hull; they are clipped in rational arithmetic and cells of zero
    volume come back empty. Adjacent cells share a face spanned by slopes, so
    only vertices with a common slope index are clipped against.
    """
    cells = dual_cells(phi) if cells is None else cells
    if not cells:
        return []
    base = slope_hull_region(phi.slopes)
    vertices = np.array([cell.vertex for cell in cells])
    values = np.array([cell.value for cell in cells])
    members = [set(int(j) for j in cell.slope_indices) for cell in cells]
    regions = []
    for v in range(len(cells)):
        others = [w for w in range(len(cells)) if w != v and members[v] & members[w]]
        regions.append(base.clip_many(vertices[others] - vertices[v], values[others] - values[v]))
    return regions


def prune(phi: ToricPotential) -> ToricPotential:
    """Drops slopes of a max-affine potential that are never strictly active."""
    cells = dual_cells(phi)
    if not cells:
        return phi
    active = np.unique(np.concatenate([cell.slope_indices for cell in cells]))
    return ToricPotential(phi.slopes[active], phi.intercepts[active], phi.sharpness, phi.name)


# --- Operations ---

def moment_map(phi, x, subdifferential: bool = False) -> np.ndarray:
    """
    ∇φ(x), the moment map in logarithmic coordinates.

    For max-affine φ at a non-smooth point this raises TieError with the tied
    slope indices, or returns the tied slopes (vertices of ∂φ(x)) when
    `subdifferential` is set.
    """
    points, single = _as_points(x, phi.dim)
    if not phi.is_max_affine:
        gradient = phi.gradient(points)
        return gradient[0] if single else gradient
    if not single:
        return np.stack([moment_map(phi, p, subdifferential) for p in points])
    affine = phi.affine_values(points)[0]
    top = affine.max()
    tied = np.flatnonzero(affine >= top - _TIE_TOL * max(1.0, abs(top)))
    distinct = np.unique(phi.slopes[tied], axis=0)
    if len(distinct) > 1:
        if subdifferential:
            return distinct
        raise TieError("max-affine potential has %d tied slopes at %s" % (len(distinct), points[0]), tied)
    return phi.slopes[tied[0]].copy()


def ma_log_density(phi, g: GWeight, polytope: LatticePolytope) -> Callable[[np.ndarray], np.ndarray]:
    """x ↦ log(det D²φ(x) g(∇φ(x)) / vol P)."""
    log_volume = np.log(volume(polytope))

    def log_density(points):
        points = np.atleast_2d(points)
        return phi.log_det_hessian(points) + g.log(phi.gradient(points)) - log_volume
    return log_density


def density_starts(phi) -> np.ndarray:
    starts = [np.zeros((1, phi.dim))]
    cells = dual_cells(phi.max_affine())
    if cells:
        starts.append(np.array([cell.vertex for cell in cells]))
    return np.concatenate(starts, axis=0)


def ma_measure(phi, g: GWeight, polytope: LatticePolytope,
               max_level: Optional[int] = None) -> Union[AtomicMeasure, DensityMeasure]:
    """
    The g-Monge-Ampère measure MA_g(φ), normalized by vol P.

    Max-affine φ gives an atomic measure with mass ∫_cell g dp / vol P at each
    vertex of the induced subdivision; cells of zero volume keep zero mass.
    Smooth φ gives the density det D²φ(x) g(∇φ(x)) / vol P.
    """
    if getattr(phi, "is_max_affine", False):
        cells = dual_cells(phi)
        vol = volume(polytope)
        if not cells:
            return AtomicMeasure(np.zeros((0, phi.dim)), np.zeros(0))
        points = np.array([cell.vertex for cell in cells])
        if phi.dim <= 2:
            masses = np.array([g.integrate_region(region) / vol for region in dual_cell_regions(phi, cells)])
        else:
            masses = np.array([g.integrate_simplices(cell.simplices) / vol for cell in cells])
        return AtomicMeasure(points, masses)
    log_density = ma_log_density(phi, g, polytope)
    # the rule follows the Hessian factor alone: step weights vanish on open sets
    return DensityMeasure(log_density, phi.dim, starts=density_starts(phi), max_level=max_level,
                          adapt_to=phi.log_det_hessian)


def pair_ma(phi, g: GWeight, polytope: LatticePolytope, u: Callable[[np.ndarray], np.ndarray],
            max_level: Optional[int] = None) -> float:
    """∫ u dMA_g(φ)."""
    return ma_measure(phi, g, polytope, max_level=max_level).pair(u)


def envelope(phi: ToricPotential, lam: Sequence[float], polytope: Optional[LatticePolytope] = None) -> ToricPotential:
    """
    P_λφ = inf_{t ≥ 0} φ(· + t) − ⟨t, λ⟩, as a max-affine potential.

    The dual function of φ is restricted to Q_λ = conv{p_j} ∩ {p ≥ λ}; the new
    slopes are the vertices of the clipped dual cells and the new intercepts
    are −ψ at those vertices. Smooth φ is first replaced by its max-affine form.

    Raises:
        EmptyEnvelopeError: no point of conv{p_j} (or of P) dominates λ.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if len(lam) != phi.dim:
        raise InputError("level λ has dimension %d, potential has %d" % (len(lam), phi.dim))
    if polytope is not None and not np.all(polytope.vertices.max(axis=0) >= lam):
        raise EmptyEnvelopeError("no point of P dominates λ = %s" % lam)
    base = phi.max_affine()
    normals, offsets = -np.eye(phi.dim), -lam
    slopes, intercepts = [], []
    cells = dual_cells(base)
    for cell, region in zip(cells, dual_cell_regions(base, cells)):
        for q in region.clip_many(normals, offsets).vertices:
            q = np.asarray(q)
            slopes.append(q)
            intercepts.append(cell.value - float(q @ cell.vertex))
    if not slopes:
        raise EmptyEnvelopeError("no slope of the potential dominates λ = %s" % lam)
    slopes = np.array(slopes)
    intercepts = np.array(intercepts)
    keys = np.round(slopes, 12)
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    result = ToricPotential(slopes[first], intercepts[first], np.inf, name=f"P_{lam.tolist()}({phi.name})")
    if _affine_rank(result.slopes) < phi.dim:
        return result
    return prune(result)


def mass_of_superlevel(phi: ToricPotential, lam: Sequence[float], polytope: LatticePolytope) -> float:
    """∫ MA(P_λφ) = vol(conv{p_j} ∩ {p ≥ λ}) / vol P."""
    return ma_measure(envelope(phi, lam, polytope), GWeight.constant(), polytope).total_mass


def sharpen_family(phi: ToricPotential, k_list: Sequence[float]) -> List[ToricPotential]:
    """φ with each sharpness in k_list (ascending), followed by the max-affine limit."""
    if phi.is_max_affine:
        raise InputError("sharpen_family needs a finite-sharpness potential")
    family = [phi.with_sharpness(float(k)) for k in sorted(k_list)]
    family.append(phi.max_affine())
    return family


# --- Reference potentials ---

def support_function(polytope: LatticePolytope) -> ToricPotential:
    """h_P(x) = max_{v vertex} ⟨v, x⟩, whose dual function vanishes on P."""
    vertices = polytope.vertices
    return ToricPotential(vertices, np.zeros(len(vertices)), np.inf, name=f"h_{polytope.name}")


def reference_potential(polytope: LatticePolytope, sharpness: float = 1.0) -> ToricPotential:
    """log Σ_v exp(⟨v, x⟩) over the vertices of P (smooth, full mass)."""
    vertices = polytope.vertices
    return ToricPotential(vertices, np.zeros(len(vertices)), sharpness, name=f"ref_{polytope.name}")


def kahler_einstein_p1() -> ToricPotential:
    """2 log(e^{x/2} + e^{−x/2}): the Kähler-Einstein potential of P¹ on [−1, 1]."""
    return ToricPotential(np.array([[-1.0], [1.0]]), np.zeros(2), 0.5, name="KE_P1")
