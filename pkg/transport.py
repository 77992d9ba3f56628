# transport.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull, QhullError

import config
import energy
from errors import ConvergenceError, InputError
from invariants import futaki_continuum
from measures import AtomicMeasure, GWeight
from polytope import ConvexRegion, LatticePolytope, volume
from potential import ToricPotential, reference_potential, support_function

logger = logging.getLogger(__name__)


@dataclass
class TransportProblem:
    """
    Find φ with MA_g(φ) = Σ m_i δ_{x_i}: the semi-discrete transport of g dν on P
    onto the atoms.
    """

    points: np.ndarray
    masses: np.ndarray
    g: GWeight
    polytope: LatticePolytope
    tol: Optional[float] = None
    max_iter: Optional[int] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        settings = config.load_settings()
        self.tol = self.tol if self.tol is not None else settings["transport_tol"]
        self.max_iter = self.max_iter if self.max_iter is not None else settings["transport_max_iter"]
        n = self.polytope.dim
        if n > 2:
            raise InputError("the transport solver supports dimensions 1 and 2, got %d" % n)
        if self.points.shape != (len(self.masses), n):
            raise InputError("atoms must be an (N, %d) array matching %d masses" % (n, len(self.masses)))
        if np.any(self.masses <= 0):
            raise InputError("atom masses must be positive")
        if abs(self.masses.sum() - 1.0) > 1e-12:
            raise InputError("atom masses sum to %.15g, expected 1" % self.masses.sum())
        if len(self.points) > 1:
            gaps = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() < 1e-12:
                raise InputError("atoms must be distinct")
        total = self.g.mass(self.polytope)
        if abs(total - 1.0) > 1e-9:
            raise InputError("g dν must be a probability measure on P, has mass %.12g" % total)
        g_min, _ = self.g.bounds(self.polytope)
        if g_min <= 0:
            raise InputError("g must be bounded below by a positive constant on P")

    @classmethod
    def from_measure(cls, measure: AtomicMeasure, g: GWeight, polytope: LatticePolytope, **kwargs) -> "TransportProblem":
        return cls(measure.points, measure.masses, g, polytope, **kwargs)

    @property
    def size(self) -> int:
        return len(self.masses)


@dataclass
class TransportSolution:
    intercepts: np.ndarray
    cells: List[ConvexRegion]
    cell_masses: np.ndarray
    potential: ToricPotential
    dual_value: float
    iterations: int
    residual: float
    trace: List[Dict] = field(default_factory=list)

    def rows(self):
        """(atom index, intercept, cell mass, cell vertices) per atom."""
        for i, (c, mass, cell) in enumerate(zip(self.intercepts, self.cell_masses, self.cells)):
            yield i, float(c), float(mass), [list(v) for v in cell.vertices]


# --- Laguerre cells ---

def laguerre_neighbours(points: np.ndarray, intercepts: np.ndarray) -> List[Set[int]]:
    """
    Pairs whose Laguerre cells can share a facet.

    ψ(p) = max_i ⟨p, x_i⟩ − c_i is linear on the cells, so adjacency is read off
    the edges of the lower convex hull of the lifted atoms (x_i, c_i). Atoms off
    the lower hull have empty cells. Degenerate lifts fall back to all pairs.
    """
    size, n = points.shape
    everyone = [set(range(size)) - {i} for i in range(size)]
    if size <= n + 1:
        return everyone
    try:
        hull = ConvexHull(np.column_stack([points, intercepts]))
    except QhullError:
        return everyone
    neighbours = [set() for _ in range(size)]
    for facet, simplex in zip(hull.equations, hull.simplices):
        if facet[n] >= -1e-12:
            continue
        for i in simplex:
            neighbours[i].update(int(j) for j in simplex if j != i)
    return neighbours


def laguerre_cell(points: np.ndarray, intercepts: np.ndarray, i: int, polytope: LatticePolytope,
                  neighbours: Optional[Set[int]] = None) -> ConvexRegion:
    """Lag_i = {p ∈ P : ⟨p, x_j − x_i⟩ ≤ c_j − c_i for the neighbours j}."""
    others = sorted(neighbours) if neighbours is not None else [j for j in range(len(points)) if j != i]
    region = ConvexRegion.from_polytope(polytope)
    if not others:
        return region if neighbours is None or len(points) == 1 else ConvexRegion([], polytope.dim)
    normals = points[others] - points[i]
    offsets = intercepts[others] - intercepts[i]
    return region.clip_many(normals, offsets)


class _CellEvaluator:
    """Cells, g-masses and the mass Jacobian at one intercept vector."""

    def __init__(self, problem: TransportProblem):
        self.problem = problem
        self.volume = volume(problem.polytope)
        self.workers = config.get_max_workers()

    def cells(self, intercepts: np.ndarray) -> Tuple[List[ConvexRegion], List[Set[int]]]:
        points = self.problem.points
        neighbours = laguerre_neighbours(points, intercepts)

        def build(i):
            return laguerre_cell(points, intercepts, i, self.problem.polytope, neighbours[i])

        if len(points) == 1:
            return [ConvexRegion.from_polytope(self.problem.polytope)], neighbours
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            cells = list(executor.map(build, range(len(points))))
        return cells, neighbours

    def masses(self, cells: Sequence[ConvexRegion]) -> np.ndarray:
        return np.array([self.problem.g.integrate_region(cell) for cell in cells]) / self.volume

    def jacobian(self, intercepts: np.ndarray, cells: Sequence[ConvexRegion],
                 neighbours: Sequence[Set[int]]) -> np.ndarray:
        """∂ mass_i / ∂ c_j: facet g-measure over |x_i − x_j|, a negative graph Laplacian."""
        points, g = self.problem.points, self.problem.g
        size = len(points)
        jac = np.zeros((size, size))
        for i in range(size):
            cell = cells[i]
            if cell.is_empty:
                continue
            for j in neighbours[i]:
                if j < i:
                    continue
                normal = points[j] - points[i]
                offset = intercepts[j] - intercepts[i]
                length = float(np.linalg.norm(normal))
                facet = cell.vertices_on_plane(normal, offset, 1e-10 * (1.0 + abs(offset)) * max(1.0, length))
                if len(facet) == 0:
                    continue
                if cell.dim == 1:
                    measure = float(g(facet[:1])[0])
                else:
                    if len(facet) < 2:
                        continue
                    spread = np.linalg.norm(facet[:, None, :] - facet[None, :, :], axis=-1)
                    a, b = np.unravel_index(np.argmax(spread), spread.shape)
                    measure = g.integrate_segment(facet[a], facet[b])
                weight = measure / length / self.volume
                jac[i, j] += weight
                jac[j, i] += weight
        jac -= np.diag(jac.sum(axis=1))
        return jac

    def dual_value(self, intercepts: np.ndarray, cells: Sequence[ConvexRegion]) -> float:
        """K(c) = ∫_P ψ_c g dν + Σ m_i c_i, minimized by the solution."""
        points, g = self.problem.points, self.problem.g
        integral = sum(g.integrate_affine(cell.simplices(), points[i], -intercepts[i])
                       for i, cell in enumerate(cells))
        return float(integral / self.volume + np.dot(self.problem.masses, intercepts))


def initial_intercepts(problem: TransportProblem) -> np.ndarray:
    """
    Intercepts whose Laguerre cells are the Voronoi cells of y_i = p̄ + s(x_i − x̄),
    a shrunken copy of the atoms around the barycenter of P; every cell is nonempty.
    """
    polytope = problem.polytope
    center = polytope.barycenter
    spread = np.max(np.linalg.norm(problem.points - problem.points.mean(axis=0), axis=1))
    s = 0.5 * polytope.distance_to_boundary(center) / spread if spread > 0 else 1.0
    sites = center + s * (problem.points - problem.points.mean(axis=0))
    return np.sum(sites ** 2, axis=1) / (2.0 * s)


def _normalize(intercepts: np.ndarray) -> np.ndarray:
    return intercepts - intercepts[0]


def _coordinate_sweep(problem: TransportProblem, evaluator: _CellEvaluator, intercepts: np.ndarray) -> np.ndarray:
    """One pass of exact coordinate updates: mass of Lag_i matched by root finding in c_i."""
    intercepts = intercepts.copy()
    points, polytope = problem.points, problem.polytope
    for i in range(1, problem.size):
        def excess(value):
            trial = intercepts.copy()
            trial[i] = value
            cell = laguerre_cell(points, trial, i, polytope)
            return problem.g.integrate_region(cell) / evaluator.volume - problem.masses[i]

        lo, hi = intercepts[i] - 1.0, intercepts[i] + 1.0
        for _ in range(60):
            if excess(lo) > 0:
                break
            lo -= 2.0 * (hi - lo)
        for _ in range(60):
            if excess(hi) < 0:
                break
            hi += 2.0 * (hi - lo)
        intercepts[i] = brentq(excess, lo, hi, xtol=1e-14)
    return intercepts


def solve(problem: TransportProblem, start: Optional[Sequence[float]] = None) -> TransportSolution:
    """
    Minimizes K(c) = ∫_P max_i(⟨p,x_i⟩ − c_i) g dν + Σ m_i c_i by damped Newton.

    ∂K/∂c_i = m_i − mass(Lag_i). A step is accepted when every cell keeps at
    least min(m)/2 and the residual decreases by the factor (1 − τ/2); after
    `transport_max_halvings` failed halvings one coordinate sweep is taken.
    Intercepts are normalized by c_0 = 0.

    Raises:
        ConvergenceError: residual above `tol` after `max_iter` steps.
    """
    max_halvings = config.get_setting("transport_max_halvings")
    evaluator = _CellEvaluator(problem)
    intercepts = _normalize(np.asarray(start, dtype=float) if start is not None else initial_intercepts(problem))
    floor = problem.masses.min() / 2.0

    cells, neighbours = evaluator.cells(intercepts)
    masses = evaluator.masses(cells)
    residual_vec = problem.masses - masses
    residual = float(np.max(np.abs(residual_vec)))
    trace = []
    logger.info("Transport: %d atoms on %s, initial residual %.3e", problem.size, problem.polytope.name, residual)

    iteration = 0
    while residual > problem.tol:
        if iteration >= problem.max_iter:
            raise ConvergenceError("transport did not converge in %d steps (residual %.3e)"
                                   % (problem.max_iter, residual), trace, residual)
        iteration += 1
        jac = evaluator.jacobian(intercepts, cells, neighbours)
        reduced = -jac[1:, 1:]
        step = np.zeros_like(intercepts)
        if problem.size > 1:
            step[1:] = -np.linalg.lstsq(reduced, residual_vec[1:], rcond=None)[0]

        tau, accepted = 1.0, False
        for _ in range(max_halvings + 1):
            trial = intercepts + tau * step
            trial_cells, trial_neighbours = evaluator.cells(trial)
            trial_masses = evaluator.masses(trial_cells)
            trial_residual = float(np.max(np.abs(problem.masses - trial_masses)))
            if trial_masses.min() >= floor and trial_residual <= (1.0 - tau / 2.0) * residual:
                accepted = True
                break
            tau /= 2.0
        if not accepted:
            logger.debug("Transport step %d: damping failed, coordinate sweep", iteration)
            trial = _coordinate_sweep(problem, evaluator, intercepts)
            trial_cells, trial_neighbours = evaluator.cells(trial)
            trial_masses = evaluator.masses(trial_cells)
            tau = 0.0

        intercepts, cells, neighbours, masses = trial, trial_cells, trial_neighbours, trial_masses
        residual_vec = problem.masses - masses
        residual = float(np.max(np.abs(residual_vec)))
        entry = {"iter": iteration, "residual": residual, "step": tau,
                 "dual_value": evaluator.dual_value(intercepts, cells)}
        trace.append(entry)
        logger.debug("Transport step %d: residual %.3e, tau %g", iteration, residual, tau)

    dual = evaluator.dual_value(intercepts, cells)
    logger.info("Transport converged in %d steps, residual %.3e", iteration, residual)
    return TransportSolution(intercepts, cells, masses, reconstruct_potential(problem, intercepts, cells),
                             dual, iteration, residual, trace)


def reconstruct_potential(problem: TransportProblem, intercepts: np.ndarray,
                          cells: Sequence[ConvexRegion]) -> ToricPotential:
    """
    φ*(x) = sup_{p ∈ P} ⟨p, x⟩ − ψ(p) as a max-affine potential.

    ψ is affine on each cell, so its Legendre transform is attained at cell
    vertices; the centroid is added as an interior sample. φ*(x_i) = c_i.
    """
    slopes, values = [], []
    for i, cell in enumerate(cells):
        if cell.is_empty:
            continue
        samples = np.vstack([np.array(cell.vertices, dtype=float).reshape(-1, cell.dim), cell.centroid()[None, :]])
        for q in samples:
            slopes.append(q)
            values.append(intercepts[i] - float(q @ problem.points[i]))
    slopes, values = np.array(slopes), np.array(values)
    _, first = np.unique(np.round(slopes, 12), axis=0, return_index=True)
    first = np.sort(first)
    return ToricPotential(slopes[first], values[first], np.inf, name="transport")


# --- Energy of a measure ---

def energy_of_measure(measure: AtomicMeasure, g: GWeight, polytope: LatticePolytope,
                      solution: Optional[TransportSolution] = None, potential=None, base=None) -> float:
    """
    E_g(μ) = sup_φ −J_{μ,g}(φ), attained at the transport solution.

    From the dual optimum: −K(c*) + Σ m_i h_P(x_i), with J taken relative to the
    support function h_P. With `potential` given, returns −J_{μ,g}(potential)
    relative to `base` instead (the primal side of the duality check).
    """
    if potential is not None:
        base = base if base is not None else energy.default_base(potential, polytope)
        method = "legendre" if potential.is_max_affine else "path"
        return -energy.j_functional(potential, base, measure, g, polytope, method=method)
    if solution is None:
        solution = solve(TransportProblem.from_measure(measure, g, polytope))
    h_p = support_function(polytope).values(measure.points)
    return float(-solution.dual_value + np.dot(measure.masses, h_p))


# --- Picard iteration for solitons ---

@dataclass
class PicardRun:
    atoms: np.ndarray
    cell_weights: np.ndarray
    values: np.ndarray
    potentials: List[ToricPotential]
    trace: List[Dict]
    converged: bool

    @property
    def potential(self) -> ToricPotential:
        return self.potentials[-1]


def picard_atoms(polytope: LatticePolytope, n_atoms: int, window: float) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoints of a uniform grid on [−L, L]^n, L = window / dist(0, ∂P), with their cell volumes."""
    dim = polytope.dim
    per_axis = n_atoms if dim == 1 else max(2, int(round(n_atoms ** (1.0 / dim))))
    half = window / polytope.distance_to_boundary(np.zeros(dim))
    width = 2.0 * half / per_axis
    axis = -half + (np.arange(per_axis) + 0.5) * width
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing='ij'), axis=-1).reshape(-1, dim)
    return grid, np.full(len(grid), width ** dim)


def soliton_picard(polytope: LatticePolytope, xi: Sequence[float], n_atoms: Optional[int] = None,
                   damping: Optional[float] = None, tol: Optional[float] = None,
                   max_iter: Optional[int] = None, start=None) -> PicardRun:
    """
    Fixed-point iteration φ_{m+1} = solve(MA_{g_V}(φ) = e^{−φ_m} / Z) on grid atoms.

    Only the values c_i = φ(x_i) at the atoms are iterated, damped as
    c ← (1 − θ) c + θ c'. D_V is recorded for each transport solution.

    Raises:
        ConvergenceError: ξ does not annihilate the Futaki invariant (no fixed
            point exists), or D_V increased five steps in a row.
    """
    settings = config.load_settings()
    n_atoms = n_atoms or settings["picard_atoms"]
    damping = damping if damping is not None else settings["picard_damping"]
    tol = tol if tol is not None else settings["picard_tol"]
    max_iter = max_iter or settings["picard_max_iter"]
    polytope.require_fano()
    xi = np.asarray(xi, dtype=float).reshape(-1)
    for i in range(polytope.dim):
        direction = np.eye(polytope.dim)[i]
        futaki = futaki_continuum(polytope, xi, direction)
        if abs(futaki) > 1e-8:
            raise ConvergenceError("ξ = %s is not the soliton field: Fut_V(e_%d) = %.3e, no fixed point exists"
                                   % (xi.tolist(), i, futaki), [], abs(futaki))

    g_v = GWeight.exp_linear(xi).normalized(polytope)
    atoms, weights = picard_atoms(polytope, n_atoms, settings["picard_window"])
    start = start if start is not None else reference_potential(polytope)
    values = _normalize(start.values(atoms))

    logger.info("Picard soliton iteration on %s with %d atoms, damping %.2f", polytope.name, len(atoms), damping)
    potentials, trace = [], []
    solution = None
    increases, previous_ding, converged = 0, None, False
    for iteration in range(1, max_iter + 1):
        log_masses = np.log(weights) - values
        masses = np.exp(log_masses - np.logaddexp.reduce(log_masses))
        masses /= masses.sum()
        problem = TransportProblem(atoms, masses, g_v, polytope)
        solution = solve(problem, start=solution.intercepts if solution is not None else None)
        target = solution.intercepts
        potentials.append(solution.potential)

        psi_integral = solution.dual_value - float(np.dot(masses, target))
        ding = psi_integral - float(np.logaddexp.reduce(np.log(weights) - target))
        change = float(np.max(np.abs(target - values)))
        trace.append({"iter": iteration, "change": change, "ding": ding,
                      "transport_steps": solution.iterations})
        logger.debug("Picard step %d: change %.3e, D_V %.12g", iteration, change, ding)

        if previous_ding is not None and ding > previous_ding + 1e-10:
            increases += 1
            if increases >= 5:
                raise ConvergenceError("Picard iteration diverging: D_V increased 5 steps in a row",
                                       trace, change)
        else:
            increases = 0
        previous_ding = ding

        values = (1.0 - damping) * values + damping * target
        if change < tol:
            converged = True
            break

    if not converged:
        logger.warning("Picard iteration stopped after %d steps without reaching %.1e", max_iter, tol)
    else:
        logger.info("Picard iteration converged in %d steps", len(trace))
    return PicardRun(atoms, weights, values, potentials, trace, converged)
