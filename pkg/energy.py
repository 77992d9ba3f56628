# energy.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
import quadrature
from errors import DivergentIntegralError, InputError
from measures import AtomicMeasure, DensityMeasure, GWeight
from polytope import LatticePolytope, in_hull_interior, volume
from potential import (ToricPotential, combine, density_starts, dual_cells, ma_measure,
                       reference_potential, support_function)

logger = logging.getLogger(__name__)

CLASSIFY_TOL = 1e-7


@dataclass
class FunctionalValue:
    """A functional value with its named components; value is their sum."""

    breakdown: Dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(sum(self.breakdown.values()))

    def to_dict(self) -> Dict:
        return {"value": self.value, "breakdown": dict(self.breakdown)}


@dataclass
class GeodesicSegment:
    """
    t ↦ φ_t between two endpoints.

    Endpoints only need an `interpolate(other, t)` method: potentials give the
    affine segment, Hermitian weights give the quantized geodesic.
    """

    start: object
    end: object
    kind: str = "affine"

    def at(self, t: float):
        if t == 0.0:
            return self.start
        if t == 1.0:
            return self.end
        return self.start.interpolate(self.end, t)


@dataclass
class ConvexityReport:
    ts: List[float]
    values: List[float]
    second_differences: List[float]
    classification: str

    def to_dict(self) -> Dict:
        return {"ts": self.ts, "values": self.values,
                "second_differences": self.second_differences, "classification": self.classification}


def default_base(phi, polytope: LatticePolytope):
    """Base point φ0 in the representation of φ: h_P for max-affine, vertex log-sum-exp otherwise."""
    if phi.is_max_affine:
        return support_function(polytope)
    return reference_potential(polytope)


def _check_pair(phi, phi0, polytope: LatticePolytope):
    if phi.dim != polytope.dim or phi0.dim != polytope.dim:
        raise InputError("potentials and polytope live in different dimensions")
    for potential in (phi, phi0):
        if not np.all(polytope.contains(potential.slopes, tol=1e-9)):
            raise InputError("potential %r has slopes outside %r" % (potential.name, polytope.name))
    if phi.is_max_affine != phi0.is_max_affine:
        raise InputError("energy needs φ and φ0 in the same representation")


# --- E_g ---

def energy_g(phi, phi0, g: GWeight, polytope: LatticePolytope, steps: Optional[int] = None,
             method: str = "path") -> float:
    """
    E_g(φ) normalized by E_g(φ0) = 0.

    method "path" integrates ∫(φ − φ0) MA_g(tφ + (1−t)φ0) over t with `steps`
    Gauss-Legendre nodes. Method "legendre" uses −∫_P (ψ_φ − ψ_φ0) g dν on
    the dual potentials and is exact for max-affine pairs.
    """
    _check_pair(phi, phi0, polytope)
    if method == "legendre":
        if not phi.is_max_affine:
            phi, phi0 = phi.max_affine(), phi0.max_affine()
        return -(dual_integral(phi, g, polytope) - dual_integral(phi0, g, polytope))
    if method != "path":
        raise InputError("unknown energy method %r" % method)

    steps = steps or config.get_setting("gauss_nodes")
    nodes, weights = quadrature.gauss_legendre_unit(steps)

    def difference(points):
        return phi.values(points) - phi0.values(points)

    def pairing(t):
        return ma_measure(combine(phi0, phi, float(t)), g, polytope).pair(difference)

    with ThreadPoolExecutor(max_workers=config.get_max_workers()) as executor:
        values = list(executor.map(pairing, nodes))
    energy = float(np.dot(weights, values))
    logger.debug("E_g by %d-node path integral: %.12g", steps, energy)
    return energy


def dual_integral(phi: ToricPotential, g: GWeight, polytope: LatticePolytope) -> float:
    """∫_P ψ_φ g dν for max-affine full-mass φ, ψ_φ its Legendre dual."""
    if not phi.is_max_affine:
        raise InputError("dual_integral needs a max-affine potential")
    if not phi.has_full_mass(polytope, tol=1e-9):
        raise InputError("dual potential is only finite on P for full-mass potentials")
    total = 0.0
    for cell in dual_cells(phi):
        for simplex in cell.simplices:
            total += g.integrate_affine([simplex], cell.vertex, -cell.value)
    return total / volume(polytope)


def energy_closed_form_1d(phi, phi0, polytope: LatticePolytope) -> float:
    """E(φ) − E(φ0) = ½[∫(φ−φ0) MA(φ) + ∫(φ−φ0) MA(φ0)] for n = 1, g = 1."""
    if polytope.dim != 1:
        raise InputError("the mixed Monge-Ampère formula is implemented for n = 1")
    _check_pair(phi, phi0, polytope)
    one = GWeight.constant()

    def difference(points):
        return phi.values(points) - phi0.values(points)
    return 0.5 * (ma_measure(phi, one, polytope).pair(difference)
                  + ma_measure(phi0, one, polytope).pair(difference))


# --- L functionals ---

def l_mu(phi, phi0, mu) -> float:
    """L_μ(φ) = ∫ (φ − φ0) dμ."""
    return mu.pair(lambda points: phi.values(points) - phi0.values(points))


def j_functional(phi, phi0, mu, g: GWeight, polytope: LatticePolytope, method: str = "path") -> float:
    """J_{μ,g}(φ) = −E_g(φ) + L_μ(φ), both relative to φ0."""
    return -energy_g(phi, phi0, g, polytope, method=method) + l_mu(phi, phi0, mu)


def _log_integral_1d_max_affine(phi: ToricPotential) -> float:
    """log ∫_R e^{−φ} dx exactly for a 1-D max-affine φ."""
    breaks = np.sort(np.array([cell.vertex[0] for cell in dual_cells(phi)]))
    values = phi.values(breaks[:, None])
    left = float(phi.slopes[np.argmin(phi.slopes[:, 0]), 0])
    right = float(phi.slopes[np.argmax(phi.slopes[:, 0]), 0])
    terms = [-values[0] - np.log(-left), -values[-1] - np.log(right)]
    for a, b, va, vb in zip(breaks[:-1], breaks[1:], values[:-1], values[1:]):
        slope = (vb - va) / (b - a)
        if abs(slope) < 1e-14:
            terms.append(-va + np.log(b - a))
        else:
            # (e^{−φ(a)} − e^{−φ(b)}) / slope, kept in log form
            high, low = (-va, -vb) if slope > 0 else (-vb, -va)
            terms.append(high + np.log1p(-np.exp(low - high)) - np.log(abs(slope)))
    return float(np.logaddexp.reduce(terms))


def l_canonical(phi) -> float:
    """
    L(φ) = −log ∫_{R^n} e^{−φ(x)} dx.

    Raises:
        DivergentIntegralError: 0 is not interior to the hull of the slopes.
    """
    if not in_hull_interior(np.zeros((1, phi.dim)), phi.slopes)[0]:
        raise DivergentIntegralError("0 is not interior to the slope hull; ∫ e^{-φ} diverges")
    if phi.is_max_affine and phi.dim == 1:
        return -_log_integral_1d_max_affine(phi)
    _, log_integral = quadrature.adaptive_rule(lambda points: -phi.values(points), phi.dim,
                                               starts=density_starts(phi))
    return -log_integral


def canonical_measure(phi, normalized: bool = True) -> DensityMeasure:
    """μ_φ = e^{−φ} dx, divided by its mass when normalized."""
    shift = l_canonical(phi) if normalized else 0.0
    return DensityMeasure(lambda points: -phi.values(points) + shift, phi.dim, starts=density_starts(phi))


# --- Modified Ding, entropy, modified Mabuchi ---

def soliton_weight(xi: Sequence[float], polytope: LatticePolytope) -> GWeight:
    """g_V(p) = e^{⟨p,ξ⟩} / ∫_P e^{⟨p,ξ⟩} dν."""
    return GWeight.exp_linear(np.asarray(xi, dtype=float)).normalized(polytope)


def ding_modified(phi, xi: Sequence[float], polytope: LatticePolytope, phi0=None,
                  method: str = "path") -> FunctionalValue:
    """D_V(φ) = −E_{g_V}(φ) + L(φ), with E relative to φ0."""
    phi0 = phi0 if phi0 is not None else default_base(phi, polytope)
    g_v = soliton_weight(xi, polytope)
    return FunctionalValue({
        "energy": -energy_g(phi, phi0, g_v, polytope, method=method),
        "l": l_canonical(phi),
    })


def entropy(mu, mu_ref) -> float:
    """
    H(μ, μ_ref) = ∫ log(dμ/dμ_ref) dμ.

    Returns +inf when μ is atomic and μ_ref has a density, or when μ charges a
    set where μ_ref vanishes.
    """
    if isinstance(mu, AtomicMeasure):
        if isinstance(mu_ref, AtomicMeasure):
            raise InputError("entropy between atomic measures is not supported")
        return np.inf if mu.total_mass > 0 else 0.0
    if isinstance(mu_ref, AtomicMeasure):
        return np.inf
    rule = mu.rule
    log_rho = np.asarray(mu.log_density(rule.points), dtype=float)
    log_ref = np.asarray(mu_ref.log_density(rule.points), dtype=float)
    if np.any(np.isnan(log_rho)) or np.any(np.isnan(log_ref)):
        raise InputError("densities must be nonnegative")
    charged = np.isfinite(log_rho)
    if np.any(charged & ~np.isfinite(log_ref)):
        return np.inf
    weights = np.exp(log_rho[charged] + rule.log_weights[charged])
    return float(np.dot(weights, log_rho[charged] - log_ref[charged]))


def mabuchi_modified(phi, xi: Sequence[float], polytope: LatticePolytope, phi0=None) -> FunctionalValue:
    """
    M_V(φ) = −E_V(μ) + H(μ, e^{−φ0} dx) at μ = MA_{g_V}(φ).

    −E_V(μ) is −J at its minimizer, which is φ itself, so it is
    −E_{g_V}(φ) + L_μ(φ). M_V − D_V is then the relative entropy of μ with
    respect to e^{−φ}/∫e^{−φ}, nonnegative and zero exactly at a soliton.
    """
    if phi.is_max_affine:
        raise InputError("modified Mabuchi needs a smooth potential (MA(φ) with a density)")
    phi0 = phi0 if phi0 is not None else default_base(phi, polytope)
    g_v = soliton_weight(xi, polytope)
    mu = ma_measure(phi, g_v, polytope)
    reference = DensityMeasure(lambda points: -phi0.values(points), phi.dim)
    return FunctionalValue({
        "energy": -energy_g(phi, phi0, g_v, polytope),
        "l_mu": l_mu(phi, phi0, mu),
        "entropy": entropy(mu, reference),
    })


# --- Convexity probes ---

def classify_second_differences(values: Sequence[float], tol: float = CLASSIFY_TOL) -> Tuple[List[float], str]:
    values = np.asarray(values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(values))))
    second = (values[:-2] - 2 * values[1:-1] + values[2:]) / scale
    if np.all(np.abs(second) <= tol):
        label = "affine"
    elif np.all(second >= -tol):
        label = "convex"
    elif np.all(second <= tol):
        label = "concave"
    else:
        label = "neither"
    return second.tolist(), label


def convexity_probe(segment: GeodesicSegment, functional: Callable, samples: int = 9,
                    tol: float = CLASSIFY_TOL) -> ConvexityReport:
    """Samples t ↦ functional(φ_t) and classifies it by normalized second differences."""
    if samples < 3:
        raise InputError("convexity probe needs at least 3 samples")
    ts = np.linspace(0.0, 1.0, samples)
    values = [float(functional(segment.at(float(t)))) for t in ts]
    second, label = classify_second_differences(values, tol)
    logger.debug("Convexity probe (%s segment): %s", segment.kind, label)
    return ConvexityReport(ts.tolist(), values, second, label)
