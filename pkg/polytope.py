# polytope.py

import itertools
import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

import config
from errors import CapacityError, DegeneratePolytopeError, InputError

logger = logging.getLogger(__name__)

ExactPoint = Tuple[Fraction, ...]
Halfspace = Tuple[Tuple[int, ...], int]


# --- Exact linear algebra helpers ---

def _eliminate(matrix: List[List[Fraction]]) -> Tuple[List[List[Fraction]], int, int]:
    """Gauss-Jordan elimination in place; returns (matrix, rank, sign of the row permutation)."""
    rows, cols = len(matrix), len(matrix[0]) if matrix else 0
    rank, sign = 0, 1
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if matrix[r][col] != 0), None)
        if pivot is None:
            continue
        if pivot != rank:
            matrix[rank], matrix[pivot] = matrix[pivot], matrix[rank]
            sign = -sign
        for r in range(rows):
            if r != rank and matrix[r][col] != 0:
                factor = matrix[r][col] / matrix[rank][col]
                matrix[r] = [a - factor * b for a, b in zip(matrix[r], matrix[rank])]
        rank += 1
        if rank == rows:
            break
    return matrix, rank, sign


def _solve_exact(a: List[List[Fraction]], b: List[Fraction]) -> Optional[ExactPoint]:
    n = len(a)
    augmented = [list(row) + [rhs] for row, rhs in zip(a, b)]
    reduced, rank, _ = _eliminate(augmented)
    if rank < n or any(reduced[i][i] == 0 for i in range(n)):
        return None
    return tuple(reduced[i][n] / reduced[i][i] for i in range(n))


def _det_exact(rows: List[List[Fraction]]) -> Fraction:
    n = len(rows)
    matrix = [list(r) for r in rows]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if matrix[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            matrix[col], matrix[pivot] = matrix[pivot], matrix[col]
            det = -det
        det *= matrix[col][col]
        for r in range(col + 1, n):
            factor = matrix[r][col] / matrix[col][col]
            if factor:
                matrix[r] = [a - factor * b for a, b in zip(matrix[r], matrix[col])]
    return det


def simplex_volume_exact(vertices: Sequence[ExactPoint]) -> Fraction:
    base = vertices[0]
    rows = [[Fraction(v[i]) - Fraction(base[i]) for i in range(len(base))] for v in vertices[1:]]
    return abs(_det_exact(rows)) / math.factorial(len(base))


# --- Polytope ---

@dataclass(frozen=True)
class LatticePolytope:
    """
    A lattice polytope P = {p : ⟨normal_i, p⟩ ≤ offset_i} with integral data.

    Vertices are computed once in exact rational arithmetic; the float copy is
    derived from them.
    """

    halfspaces: Tuple[Halfspace, ...]
    name: str = ""

    def __post_init__(self):
        if not self.halfspaces:
            raise DegeneratePolytopeError("polytope needs at least one half-space")
        dims = {len(normal) for normal, _ in self.halfspaces}
        if len(dims) != 1:
            raise InputError("half-space normals have inconsistent dimensions: %s" % sorted(dims))
        for normal, offset in self.halfspaces:
            if any(int(a) != a for a in normal) or int(offset) != offset:
                raise InputError("half-space data must be integral: %s <= %s" % (normal, offset))
        # touch the derived data so invalid polytopes fail at construction
        self._validate()

    @property
    def dim(self) -> int:
        return len(self.halfspaces[0][0])

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([normal for normal, _ in self.halfspaces], dtype=np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([offset for _, offset in self.halfspaces], dtype=np.int64)

    @cached_property
    def vertices_exact(self) -> List[ExactPoint]:
        n = self.dim
        rows = [[Fraction(int(a)) for a in normal] for normal, _ in self.halfspaces]
        rhs = [Fraction(int(offset)) for _, offset in self.halfspaces]
        found = set()
        for subset in itertools.combinations(range(len(rows)), n):
            point = _solve_exact([rows[i] for i in subset], [rhs[i] for i in subset])
            if point is None:
                continue
            if all(sum(a * x for a, x in zip(row, point)) <= b for row, b in zip(rows, rhs)):
                found.add(point)
        return _order_vertices(sorted(found), n)

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices_exact], dtype=float)

    def _validate(self):
        n = self.dim
        a_ub = self.normals.astype(float)
        b_ub = self.offsets.astype(float)
        for i in range(n):
            for sign in (1.0, -1.0):
                c = np.zeros(n)
                c[i] = -sign
                result = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * n, method='highs')
                if result.status == 2:
                    raise DegeneratePolytopeError("half-spaces have empty intersection")
                if result.status == 3:
                    raise DegeneratePolytopeError("polytope is unbounded in direction %d" % i)
        vertices = self.vertices
        if len(vertices) < n + 1 or np.linalg.matrix_rank(vertices[1:] - vertices[0]) < n:
            raise DegeneratePolytopeError("polytope %r is not full-dimensional" % (self.name or self.halfspaces,))

    def contains(self, points: np.ndarray, k: int = 1, strict: bool = False, tol: float = 0.0) -> np.ndarray:
        """Membership of points (M, n) in kP."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lhs = points @ self.normals.T.astype(float)
        rhs = k * self.offsets.astype(float)
        if strict:
            return np.all(lhs < rhs - tol, axis=1)
        return np.all(lhs <= rhs + tol, axis=1)

    @property
    def origin_interior(self) -> bool:
        """True when 0 lies strictly inside P (required for soliton computations)."""
        return bool(np.all(self.offsets > 0))

    @property
    def is_reflexive(self) -> bool:
        """Anticanonical (Fano-mode) presentation: every facet offset equals 1."""
        return bool(np.all(self.offsets == 1))

    def require_fano(self):
        if not self.origin_interior:
            raise InputError("polytope %r does not contain the origin in its interior" % self.name)

    def distance_to_boundary(self, point: Sequence[float]) -> float:
        point = np.asarray(point, dtype=float)
        normals = self.normals.astype(float)
        slack = self.offsets - normals @ point
        return float(np.min(slack / np.linalg.norm(normals, axis=1)))

    @cached_property
    def barycenter(self) -> np.ndarray:
        moments = dh_measure_moments(self, 1)
        return np.array([moments[tuple(1 if j == i else 0 for j in range(self.dim))]
                         for i in range(self.dim)])

    def to_dict(self) -> Dict:
        return {
            "dim": self.dim,
            "halfspaces": [{"normal": list(normal), "offset": offset} for normal, offset in self.halfspaces],
            "name": self.name,
        }


def _order_vertices(vertices: List[ExactPoint], n: int) -> List[ExactPoint]:
    """Sorted for n=1, counter-clockwise for n=2, lexicographic otherwise."""
    if n != 2 or len(vertices) < 3:
        return vertices
    cx = sum(float(v[0]) for v in vertices) / len(vertices)
    cy = sum(float(v[1]) for v in vertices) / len(vertices)
    return sorted(vertices, key=lambda v: math.atan2(float(v[1]) - cy, float(v[0]) - cx))


def polytope_from_dict(data: Dict) -> LatticePolytope:
    try:
        halfspaces = tuple((tuple(int(a) for a in h["normal"]), int(h["offset"])) for h in data["halfspaces"])
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed polytope JSON: {e}")
    polytope = LatticePolytope(halfspaces, name=str(data.get("name", "")))
    if "dim" in data and int(data["dim"]) != polytope.dim:
        raise InputError("declared dim %s does not match half-space data (%d)" % (data["dim"], polytope.dim))
    return polytope


def read_json(path: str) -> Dict:
    """Reads a JSON file, reporting syntax errors with line information."""
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    except IOError as e:
        raise InputError(f"cannot read {path}: {e}")


def load_polytope(path: str) -> LatticePolytope:
    """Loads a polytope from a JSON file or a `builtin:<name>` reference."""
    if path.startswith("builtin:"):
        return named_polytope(path.split(":", 1)[1])
    return polytope_from_dict(read_json(path))


# --- Named polytopes ---

def interval(a: int, b: int) -> LatticePolytope:
    return LatticePolytope((((-1,), -a), ((1,), b)), name=f"interval[{a},{b}]")


def unit_simplex(n: int = 2) -> LatticePolytope:
    halfspaces = [(tuple(-1 if j == i else 0 for j in range(n)), 0) for i in range(n)]
    halfspaces.append((tuple([1] * n), 1))
    return LatticePolytope(tuple(halfspaces), name=f"simplex{n}")


def unit_square() -> LatticePolytope:
    return LatticePolytope((((-1, 0), 0), ((0, -1), 0), ((1, 0), 1), ((0, 1), 1)), name="square")


def p2_anticanonical() -> LatticePolytope:
    return LatticePolytope((((-1, 0), 1), ((0, -1), 1), ((1, 1), 1)), name="P2")


def bl1p2_anticanonical() -> LatticePolytope:
    return LatticePolytope((((-1, 0), 1), ((0, -1), 1), ((1, 1), 1), ((-1, -1), 1)), name="Bl1P2")


def p1xp1_anticanonical() -> LatticePolytope:
    return LatticePolytope((((-1, 0), 1), ((0, -1), 1), ((1, 0), 1), ((0, 1), 1)), name="P1xP1")


NAMED_POLYTOPES = {
    "p1": lambda: interval(-1, 1),
    "interval": lambda: interval(-1, 1),
    "unit_interval": lambda: interval(0, 1),
    "test_interval": lambda: interval(-1, 2),
    "simplex": lambda: unit_simplex(2),
    "square": unit_square,
    "p2": p2_anticanonical,
    "bl1p2": bl1p2_anticanonical,
    "p1xp1": p1xp1_anticanonical,
}


def named_polytope(name: str) -> LatticePolytope:
    try:
        return NAMED_POLYTOPES[name.lower()]()
    except KeyError:
        raise InputError("unknown polytope %r; choose from %s" % (name, ", ".join(sorted(NAMED_POLYTOPES))))


# --- Lattice points and volume ---

def lattice_points(polytope: LatticePolytope, k: int) -> np.ndarray:
    """
    All integer points of the dilate kP, in lexicographic order.

    Raises:
        CapacityError: the integer bounding box exceeds `lattice_capacity`.
    """
    if int(k) != k or k < 1:
        raise InputError("dilation k must be a positive integer, got %r" % (k,))
    k = int(k)
    n = polytope.dim
    exact = polytope.vertices_exact
    lo = [math.ceil(k * min(v[i] for v in exact)) for i in range(n)]
    hi = [math.floor(k * max(v[i] for v in exact)) for i in range(n)]
    if max(max(abs(a) for a in lo), max(abs(b) for b in hi)) > 2 ** 40:
        raise CapacityError("dilation %d overflows lattice coordinates" % k)
    box_size = reduce(lambda acc, pair: acc * (pair[1] - pair[0] + 1), zip(lo, hi), 1)
    capacity = config.get_setting("lattice_capacity")
    if box_size > capacity:
        raise CapacityError("lattice scan of %d points exceeds capacity %d" % (box_size, capacity))
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, n)
    inside = np.all(grid @ polytope.normals.T <= k * polytope.offsets, axis=1)
    return grid[inside]


@dataclass(frozen=True)
class SimplexDecomposition:
    """Simplices (each an (n+1)-tuple of exact vertices) covering P with disjoint interiors."""

    simplices: Tuple[Tuple[ExactPoint, ...], ...]

    def volumes_exact(self) -> List[Fraction]:
        return [simplex_volume_exact(s) for s in self.simplices]

    def total_volume_exact(self) -> Fraction:
        return sum(self.volumes_exact(), Fraction(0))

    def float_simplices(self) -> List[np.ndarray]:
        return [np.array([[float(x) for x in v] for v in s]) for s in self.simplices]


def simplex_decomposition(polytope: LatticePolytope) -> SimplexDecomposition:
    vertices = polytope.vertices_exact
    n = polytope.dim
    if n == 1:
        simplices = [(vertices[0], vertices[-1])]
    elif n == 2:
        simplices = [(vertices[0], vertices[i], vertices[i + 1]) for i in range(1, len(vertices) - 1)]
    else:
        triangulation = Delaunay(polytope.vertices)
        simplices = [tuple(vertices[i] for i in simplex) for simplex in triangulation.simplices]
    simplices = [s for s in simplices if simplex_volume_exact(s) > 0]
    return SimplexDecomposition(tuple(simplices))


def volume_exact(polytope: LatticePolytope) -> Fraction:
    return simplex_decomposition(polytope).total_volume_exact()


def volume(polytope: LatticePolytope) -> float:
    """Lebesgue volume of P."""
    return float(volume_exact(polytope))


# --- Exp-linear integration ---

def divided_difference_exp(nodes: Sequence[float], series_gap: Optional[float] = None) -> float:
    """
    Divided difference exp[z_1, ..., z_m] of the exponential over (possibly repeated) nodes.

    Uses exp(J)[0, m-1] for the bidiagonal matrix J with the nodes on the diagonal,
    which stays accurate when nodes coincide.
    """
    z = np.asarray(nodes, dtype=float)
    m = len(z)
    if m == 1:
        return float(np.exp(z[0]))
    gap = series_gap if series_gap is not None else config.get_setting("series_gap")
    center = float(np.mean(z))
    deviations = z - center
    if np.max(np.abs(deviations)) <= gap:
        return math.exp(center) / math.factorial(m - 1)
    jordan = np.diag(deviations) + np.diag(np.ones(m - 1), 1)
    return math.exp(center) * float(expm(jordan)[0, m - 1])


def _expand_monomial(vertices: Sequence[Sequence], moment: Sequence[int]) -> Dict[Tuple[int, ...], object]:
    """Writes p^moment on the simplex as a polynomial in barycentric coordinates."""
    count = len(vertices)
    poly = {tuple([0] * count): 1}
    for j, power in enumerate(moment):
        for _ in range(int(power)):
            product = {}
            for gamma, coeff in poly.items():
                for i in range(count):
                    c = vertices[i][j]
                    if c == 0:
                        continue
                    key = gamma[:i] + (gamma[i] + 1,) + gamma[i + 1:]
                    product[key] = product.get(key, 0) + coeff * c
            poly = product
    return poly


def integrate_exp_linear_simplex(vertices: np.ndarray, xi: Sequence[float], moment: Optional[Sequence[int]] = None,
                                 series_gap: Optional[float] = None) -> float:
    """∫_S p^moment e^{⟨p,ξ⟩} dp over one simplex given by (n+1, n) float vertices."""
    vertices = np.asarray(vertices, dtype=float)
    n = vertices.shape[1]
    moment = tuple(moment) if moment is not None else (0,) * n
    vol = abs(float(np.linalg.det(vertices[1:] - vertices[0]))) / math.factorial(n)
    if vol == 0.0:
        return 0.0
    exponents = vertices @ np.asarray(xi, dtype=float)
    total = 0.0
    for gamma, coeff in _expand_monomial(vertices.tolist(), moment).items():
        nodes = np.repeat(exponents, np.asarray(gamma) + 1)
        weight = float(np.prod([math.factorial(g) for g in gamma]))
        total += coeff * weight * divided_difference_exp(nodes, series_gap)
    return math.factorial(n) * vol * total


def integrate_exp_linear_simplices(simplices: Sequence[np.ndarray], xi: Sequence[float],
                                   moment: Optional[Sequence[int]] = None) -> float:
    gap = config.get_setting("series_gap")
    return float(sum(integrate_exp_linear_simplex(s, xi, moment, gap) for s in simplices))


def integrate_exp_linear(polytope: LatticePolytope, xi: Sequence[float],
                         moment: Optional[Sequence[int]] = None) -> float:
    """∫_P p^moment e^{⟨p,ξ⟩} dp, summed over a simplex decomposition of P."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if len(xi) != polytope.dim:
        raise InputError("direction has dimension %d, polytope has %d" % (len(xi), polytope.dim))
    return integrate_exp_linear_simplices(simplex_decomposition(polytope).float_simplices(), xi, moment)


def dh_measure_moments(polytope: LatticePolytope, degree: int, exact: bool = False) -> Dict[Tuple[int, ...], object]:
    """
    Moments ∫ p^β dν of the normalized Lebesgue measure ν on P for all |β| ≤ degree.

    Computed exactly from ∫_S λ^γ = n! vol(S) γ! / (|γ| + n)! on each simplex.
    """
    n = polytope.dim
    decomposition = simplex_decomposition(polytope)
    volumes = decomposition.volumes_exact()
    total_volume = sum(volumes, Fraction(0))
    moments = {}
    for beta in itertools.product(range(degree + 1), repeat=n):
        if sum(beta) > degree:
            continue
        value = Fraction(0)
        for simplex, vol in zip(decomposition.simplices, volumes):
            for gamma, coeff in _expand_monomial(simplex, beta).items():
                gamma_factorial = reduce(lambda acc, g: acc * math.factorial(g), gamma, 1)
                value += (Fraction(coeff) * math.factorial(n) * vol * gamma_factorial
                          / math.factorial(sum(gamma) + n))
        moment = value / total_volume
        moments[beta] = moment if exact else float(moment)
    return moments


# --- Convex regions (cells) ---

# A line ⟨normal, p⟩ = offset with rational data.
Line = Tuple[Tuple[Fraction, Fraction], Fraction]


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def _line_through(a: ExactPoint, b: ExactPoint) -> Line:
    normal = (b[1] - a[1], a[0] - b[0])
    return normal, normal[0] * a[0] + normal[1] * a[1]


def _intersect(first: Line, second: Line) -> ExactPoint:
    (a1, b1), c1 = first
    (a2, b2), c2 = second
    det = a1 * b2 - b1 * a2
    return (c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det


def _dedupe(vertices: List[ExactPoint]) -> List[ExactPoint]:
    result = []
    for v in vertices:
        if not result or v != result[-1]:
            result.append(v)
    while len(result) > 1 and result[0] == result[-1]:
        result.pop()
    return result


def _clip_exact(vertices: List[ExactPoint], lines: List[Line], normal: Tuple[Fraction, Fraction],
                offset: Fraction) -> Tuple[List[ExactPoint], List[Line]]:
    """
    One Sutherland-Hodgman step in rational arithmetic.

    lines[i] supports the edge vertices[i] → vertices[i+1]. New vertices are
    intersections of two supporting lines, so coordinates never compound
    across clips.
    """
    clip_line = (normal, offset)

    def side(p):
        return normal[0] * p[0] + normal[1] * p[1] - offset

    out_vertices: List[ExactPoint] = []
    out_lines: List[Line] = []
    count = len(vertices)
    sides = [side(v) for v in vertices]
    for i in range(count):
        a, line, sa, sb = vertices[i], lines[i], sides[i], sides[(i + 1) % count]
        if sa <= 0 and sb <= 0:
            out_vertices.append(a)
            out_lines.append(line)
        elif sa < 0 < sb:
            out_vertices.extend([a, _intersect(line, clip_line)])
            out_lines.extend([line, clip_line])
        elif sa == 0 < sb:
            out_vertices.append(a)
            out_lines.append(clip_line)
        elif sb < 0 < sa:
            out_vertices.append(_intersect(line, clip_line))
            out_lines.append(line)
    return out_vertices, out_lines


def clip_polygon(vertices: Sequence[Tuple], normal: Sequence, offset) -> List[ExactPoint]:
    """Keeps the part of a convex polygon where ⟨normal, p⟩ ≤ offset, in exact arithmetic."""
    exact = _dedupe([tuple(_exact(x) for x in v) for v in vertices])
    if not exact:
        return []
    lines = [_line_through(a, b) for a, b in zip(exact, exact[1:] + exact[:1])]
    clipped, _ = _clip_exact(exact, lines, (_exact(normal[0]), _exact(normal[1])), _exact(offset))
    return clipped


def polygon_area(vertices: Sequence[Tuple]) -> float:
    area = 0
    for (x0, y0), (x1, y1) in zip(vertices, list(vertices[1:]) + [vertices[0]]):
        area += x0 * y1 - x1 * y0
    return float(abs(area)) / 2.0


class ConvexRegion:
    """
    A convex subset of P in dimension 1 or 2: an interval or an ordered polygon.

    Vertices are kept as rationals (float inputs convert exactly) and every clip
    is exact; `vertices` is the float copy derived once per region.
    """

    def __init__(self, vertices: Sequence[Tuple], dim: int, lines: Optional[List[Line]] = None):
        self.dim = dim
        exact = [tuple(_exact(x) for x in v) for v in vertices]
        if dim == 2:
            deduped = _dedupe(exact)
            if len(deduped) != len(exact):
                lines = None
            exact = deduped
            if lines is None and len(exact) > 1:
                lines = [_line_through(a, b) for a, b in zip(exact, exact[1:] + exact[:1])]
        self.exact_vertices: List[ExactPoint] = exact
        self._lines = lines or []
        self.vertices = [tuple(float(x) for x in v) for v in exact]

    @classmethod
    def from_polytope(cls, polytope: LatticePolytope) -> "ConvexRegion":
        if polytope.dim > 2:
            raise InputError("cell clipping is implemented for dimensions 1 and 2, got %d" % polytope.dim)
        vertices = polytope.vertices_exact
        if polytope.dim == 1:
            return cls([min(vertices), max(vertices)], 1)
        return cls(vertices, 2)

    @classmethod
    def from_simplex(cls, simplex: np.ndarray) -> "ConvexRegion":
        simplex = np.asarray(simplex, dtype=float)
        dim = simplex.shape[1]
        if dim > 2:
            raise InputError("cell clipping is implemented for dimensions 1 and 2, got %d" % dim)
        if dim == 1:
            return cls([(simplex[:, 0].min(),), (simplex[:, 0].max(),)], 1)
        return cls([tuple(v) for v in simplex], 2)

    @property
    def is_empty(self) -> bool:
        return len(self.exact_vertices) < self.dim + 1

    def clip(self, normal: Sequence[float], offset: float) -> "ConvexRegion":
        """Intersection with the half-space ⟨normal, p⟩ ≤ offset."""
        if self.is_empty:
            return self
        offset = _exact(offset)
        if self.dim == 1:
            lo, hi = self.exact_vertices[0][0], self.exact_vertices[1][0]
            a = _exact(normal[0])
            if a > 0:
                hi = min(hi, offset / a)
            elif a < 0:
                lo = max(lo, offset / a)
            elif offset < 0:
                return ConvexRegion([], 1)
            return ConvexRegion([(lo,), (hi,)] if lo <= hi else [], 1)
        vertices, lines = _clip_exact(self.exact_vertices, self._lines,
                                      (_exact(normal[0]), _exact(normal[1])), offset)
        return ConvexRegion(vertices, 2, lines)

    def clip_many(self, normals: np.ndarray, offsets: np.ndarray) -> "ConvexRegion":
        region = self
        for normal, offset in zip(normals, offsets):
            region = region.clip(normal, offset)
            if region.is_empty:
                break
        return region

    def volume_exact(self) -> Fraction:
        if self.is_empty:
            return Fraction(0)
        if self.dim == 1:
            return self.exact_vertices[1][0] - self.exact_vertices[0][0]
        area = Fraction(0)
        vertices = self.exact_vertices
        for (x0, y0), (x1, y1) in zip(vertices, vertices[1:] + vertices[:1]):
            area += x0 * y1 - x1 * y0
        return abs(area) / 2

    def volume(self) -> float:
        return float(self.volume_exact())

    def simplices(self) -> List[np.ndarray]:
        if self.is_empty:
            return []
        points = np.array(self.vertices, dtype=float)
        if self.dim == 1:
            return [points]
        return [points[[0, i, i + 1]] for i in range(1, len(points) - 1)]

    def centroid(self) -> np.ndarray:
        points = np.array(self.vertices, dtype=float)
        if self.dim == 1 or self.volume() == 0.0:
            return points.mean(axis=0)
        weighted = sum(_simplex_area(s) * s.mean(axis=0) for s in self.simplices())
        return weighted / self.volume()

    def vertices_on_plane(self, normal: np.ndarray, offset: float, tol: float) -> np.ndarray:
        points = np.array(self.vertices, dtype=float).reshape(-1, self.dim)
        if len(points) == 0:
            return points
        return points[np.abs(points @ np.asarray(normal, dtype=float) - offset) <= tol]


def _simplex_area(triangle: np.ndarray) -> float:
    return abs(float(np.linalg.det(triangle[1:] - triangle[0]))) / math.factorial(triangle.shape[1])


# --- Hull tests ---

def hull_equations(points: np.ndarray) -> Optional[np.ndarray]:
    """Facet equations [normal | offset] of conv(points), None when degenerate."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[1]
    if n == 1:
        lo, hi = points[:, 0].min(), points[:, 0].max()
        if hi <= lo:
            return None
        return np.array([[-1.0, lo], [1.0, -hi]])
    try:
        return ConvexHull(points).equations
    except (QhullError, ValueError):
        return None


def in_hull_interior(queries: np.ndarray, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Strict interior membership of queries (M, n) in conv(points)."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    equations = hull_equations(points)
    if equations is None:
        return np.zeros(len(queries), dtype=bool)
    values = queries @ equations[:, :-1].T + equations[:, -1]
    return np.all(values < -tol, axis=1)
