# quantization.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

import config
import quadrature
from energy import FunctionalValue, l_canonical, soliton_weight
from errors import BasisMismatchError, ConvergenceError, DivergentIntegralError, InputError
from invariants import quantized_soliton_field, soliton_field
from measures import AtomicMeasure, DensityMeasure, GWeight
from polytope import LatticePolytope, in_hull_interior, lattice_points, volume
from potential import ToricPotential, density_starts, reference_potential

logger = logging.getLogger(__name__)

MEASURE_MODES = ("volume", "canonical", "lebesgue")

# Hilb quadrature rules are rebuilt while the iteration residual is above this
# and reused afterwards.
REBUILD_RESIDUAL = 1e-3
# exp(±690) is the edge of double range
LOG_WEIGHT_LIMIT = 690.0
# rises of the quantized Ding functional below this are rounding
DING_SLACK = 1e-10
_CHUNK = 20000


@dataclass(eq=False)
class HermitianWeights:
    """
    A torus-invariant Hermitian metric on the level-k sections: one weight c_α
    per lattice point α of kP. Excluded entries (g(α/k) = 0) carry c_α = +inf.
    """

    polytope: LatticePolytope
    k: int
    log_weights: np.ndarray
    basis: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.basis is None:
            self.basis = lattice_points(self.polytope, self.k)
        self.basis = np.asarray(self.basis)
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.log_weights) != len(self.basis):
            raise BasisMismatchError("%d weights for %d lattice points of %dP"
                                     % (len(self.log_weights), len(self.basis), self.k))
        if np.any(np.isnan(self.log_weights)) or np.any(np.isneginf(self.log_weights)):
            raise InputError("Hermitian weights must be positive")
        if not np.any(self.included):
            raise InputError("every entry of the Hermitian weights is excluded")

    @classmethod
    def uniform(cls, polytope: LatticePolytope, k: int) -> "HermitianWeights":
        basis = lattice_points(polytope, k)
        return cls(polytope, k, np.zeros(len(basis)), basis)

    @classmethod
    def from_weights(cls, polytope: LatticePolytope, k: int, weights: Sequence[float]) -> "HermitianWeights":
        weights = np.asarray(weights, dtype=float)
        if np.any(~(weights > 0)):
            raise InputError("Hermitian weights must be positive")
        return cls(polytope, k, np.log(weights))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def excluded(self) -> np.ndarray:
        return np.isposinf(self.log_weights)

    @property
    def included(self) -> np.ndarray:
        return ~self.excluded

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def spectrum(self) -> np.ndarray:
        """The normalized eigenvalues α/k."""
        return self.basis / float(self.k)

    def _replace(self, log_weights: np.ndarray) -> "HermitianWeights":
        return HermitianWeights(self.polytope, self.k, log_weights, self.basis)

    def scaled(self, lam: float) -> "HermitianWeights":
        """λH."""
        return self._replace(self.log_weights + np.log(lam))

    def normalized(self) -> "HermitianWeights":
        """The representative with mean log-weight zero over included entries."""
        shift = float(np.mean(self.log_weights[self.included]))
        return self._replace(self.log_weights - shift)

    def interpolate(self, other: "HermitianWeights", t: float) -> "HermitianWeights":
        return geodesic_quantized(self, other, t)

    def check_compatible(self, other: "HermitianWeights"):
        if self.k != other.k or self.basis.shape != other.basis.shape or not np.array_equal(self.basis, other.basis):
            raise BasisMismatchError("Hermitian weights live on different bases (k=%d vs k=%d)" % (self.k, other.k))

    def log_difference(self, other: "HermitianWeights") -> np.ndarray:
        """log c − log c' on the common included entries."""
        self.check_compatible(other)
        if not np.array_equal(self.excluded, other.excluded):
            raise BasisMismatchError("Hermitian weights exclude different entries")
        mask = self.included
        return self.log_weights[mask] - other.log_weights[mask]

    def distance_mod_constants(self, other: "HermitianWeights") -> float:
        delta = self.log_difference(other)
        return float(np.max(np.abs(delta - delta.mean())))

    def distance_mod_translations(self, other: "HermitianWeights") -> float:
        """Distance after removing the best fit a + ⟨α, η⟩ (scalings and torus pullbacks)."""
        delta = self.log_difference(other)
        design = np.hstack([np.ones((len(delta), 1)), self.basis[self.included].astype(float)])
        coefficients, *_ = np.linalg.lstsq(design, delta, rcond=None)
        return float(np.max(np.abs(delta - design @ coefficients)))

    def rows(self):
        for alpha, c in zip(self.basis, self.weights):
            yield tuple(int(a) for a in alpha) + (float(c),)

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "basis": self.basis.tolist(),
            "log_weights": [None if np.isinf(x) else float(x) for x in self.log_weights],
        }


# --- Fubini-Study map ---

def fs(weights: HermitianWeights) -> ToricPotential:
    """FS(H)(x) = (1/k) log Σ_α e^{⟨α,x⟩} / c_α, summed over included entries."""
    mask = weights.included
    k = weights.k
    return ToricPotential(weights.spectrum[mask], -weights.log_weights[mask] / k, float(k),
                          name=f"FS_{k}({weights.polytope.name})")


# --- Hilb map ---

def measure_log_density(phi, polytope: LatticePolytope, mode: str,
                        reference: Optional[ToricPotential] = None,
                        normalize: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """
    log dμ/dx for the Hilb measure modes.

    volume: MA(φ_ref) for a fixed smooth full-mass φ_ref (vertex log-sum-exp by default).
    canonical: e^{−φ}dx, divided by its mass when normalize is set.
    lebesgue: dx.
    """
    if mode == "volume":
        reference = reference if reference is not None else reference_potential(polytope)
        log_volume = np.log(volume(polytope))
        return lambda points: reference.log_det_hessian(np.atleast_2d(points)) - log_volume
    if mode == "canonical":
        if not in_hull_interior(np.zeros((1, phi.dim)), phi.slopes)[0]:
            raise DivergentIntegralError("canonical measure e^{-φ}dx has infinite mass: 0 is not interior to the slopes")
        shift = l_canonical(phi) if normalize else 0.0
        return lambda points: shift - phi.values(np.atleast_2d(points))
    if mode == "lebesgue":
        return lambda points: np.zeros(len(np.atleast_2d(points)))
    raise InputError("unknown measure mode %r; choose from %s" % (mode, ", ".join(MEASURE_MODES)))


def _entry_integrand(phi, alpha: np.ndarray, k: int, log_mu: Callable) -> Callable[[np.ndarray], np.ndarray]:
    alpha = np.asarray(alpha, dtype=float)

    def log_f(points):
        points = np.atleast_2d(points)
        return points @ alpha - k * phi.values(points) + log_mu(points)
    return log_f


def _raw_entries(phi, polytope: LatticePolytope, k: int, mode: str, active: np.ndarray,
                 rules: Optional[List] = None, window: Optional[float] = None,
                 reference: Optional[ToricPotential] = None,
                 normalize: bool = True) -> Tuple[np.ndarray, List]:
    """log ∫ e^{⟨α,x⟩ − kφ(x)} dμ for the active entries, with the quadrature rules used."""
    if phi.dim != polytope.dim:
        raise InputError("potential on R^%d, polytope of dimension %d" % (phi.dim, polytope.dim))
    basis = lattice_points(polytope, k)
    if mode == "lebesgue":
        interior = in_hull_interior(basis / float(k), phi.slopes)
        divergent = np.flatnonzero(active & ~interior)
        if len(divergent):
            raise DivergentIntegralError("Hilb entries %s have α/k on the boundary of the slope hull; "
                                         "∫ e^{⟨α,x⟩-kφ} dx diverges" % divergent.tolist(), divergent)
    log_mu = measure_log_density(phi, polytope, mode, reference, normalize)
    starts = density_starts(phi)

    def evaluate(index):
        if not active[index]:
            return np.nan, None
        log_f = _entry_integrand(phi, basis[index], k, log_mu)
        if rules is not None and rules[index] is not None:
            rule = rules[index]
            return rule.log_integrate(quadrature.safe_eval(log_f, rule.points)), rule
        try:
            rule, estimate = quadrature.adaptive_rule(log_f, phi.dim, starts=starts, window=window)
        except DivergentIntegralError as e:
            raise DivergentIntegralError("Hilb entry %d (α = %s) diverges: %s"
                                         % (index, basis[index].tolist(), e), [index])
        return estimate, rule

    with ThreadPoolExecutor(max_workers=config.get_max_workers()) as executor:
        results = list(executor.map(evaluate, range(len(basis))))
    log_raw = np.array([value for value, _ in results])
    vanishing = np.flatnonzero(active & ~np.isfinite(log_raw))
    if len(vanishing):
        raise DivergentIntegralError("Hilb entries %s evaluated to zero or infinity" % vanishing.tolist(), vanishing)
    return log_raw, [rule for _, rule in results]


def _hilb_with_rules(phi, polytope: LatticePolytope, k: int, mode: str = "volume",
                     g: Optional[GWeight] = None, rules: Optional[List] = None,
                     window: Optional[float] = None, reference: Optional[ToricPotential] = None,
                     normalize: bool = True) -> Tuple[HermitianWeights, List]:
    g = g or GWeight.constant()
    basis = lattice_points(polytope, k)
    g_values = g(basis / float(k))
    active = g_values > 0
    if not np.any(active):
        raise InputError("g vanishes at every point of the level-%d spectrum" % k)
    if not np.all(active):
        logger.warning("Hilb at k=%d: %d entries with g(α/k) = 0 excluded (indices %s)",
                       k, int(np.sum(~active)), np.flatnonzero(~active).tolist())
    log_raw, used = _raw_entries(phi, polytope, k, mode, active, rules, window, reference, normalize)
    log_weights = np.full(len(basis), np.inf)
    log_weights[active] = log_raw[active] - np.log(g_values[active])
    return HermitianWeights(polytope, k, log_weights, basis), used


def hilb(phi, polytope: LatticePolytope, k: int, mode: str = "volume", g: Optional[GWeight] = None,
         rules: Optional[List] = None, cache=None, reference: Optional[ToricPotential] = None,
         normalize: bool = True) -> HermitianWeights:
    """
    Hilb(kφ, μ, g): c_α = g(α/k)^{-1} ∫_{R^n} e^{⟨α,x⟩ − kφ(x)} dμ(x).

    Args:
        mode: "volume", "canonical" or "lebesgue" (see measure_log_density).
        rules: per-entry quadrature rules from hilb_rules; adaptive rules are
            built when omitted.
        cache: optional QuadratureCache consulted for plain potentials.

    Raises:
        DivergentIntegralError: an entry integral diverges; `indices` names it.
    """
    cacheable = (cache is not None and rules is None and reference is None
                 and isinstance(phi, ToricPotential))
    if cacheable:
        g_key = g or GWeight.constant()
        mode_key = mode if normalize else mode + ":raw"
        key = cache.make_key(polytope, phi, k, mode_key, g_key.fingerprint())
        cached = cache.get(key)
        if cached is not None and len(cached) == len(lattice_points(polytope, k)):
            logger.debug("Hilb cache hit for k=%d (%s)", k, mode)
            return HermitianWeights(polytope, k, cached)
    weights, _ = _hilb_with_rules(phi, polytope, k, mode, g, rules, None, reference, normalize)
    if cacheable:
        cache.put(key, k, mode_key, weights.log_weights, polytope.name)
    return weights


def hilb_rules(phi, polytope: LatticePolytope, k: int, mode: str = "volume", g: Optional[GWeight] = None,
               window: Optional[float] = None, reference: Optional[ToricPotential] = None,
               normalize: bool = True) -> List:
    """Adaptive per-entry rules over a window padded by `hilb_window_pad`, for reuse by hilb."""
    if window is None:
        settings = config.load_settings()
        window = settings["quadrature_window"] + settings["hilb_window_pad"]
    _, rules = _hilb_with_rules(phi, polytope, k, mode, g, None, window, reference, normalize)
    return rules


def hilb_entry_log(phi, polytope: LatticePolytope, alpha: Sequence[int], k: int, mode: str = "volume",
                   g: Optional[GWeight] = None, reference: Optional[ToricPotential] = None) -> float:
    """log c_α for a single lattice point α of kP."""
    alpha = np.asarray(alpha)
    g = g or GWeight.constant()
    if not polytope.contains(alpha[None, :].astype(float), k=k)[0]:
        raise InputError("α = %s is not a lattice point of %dP" % (alpha.tolist(), k))
    log_g = float(g.log(alpha[None, :] / float(k))[0])
    if not np.isfinite(log_g):
        raise InputError("g vanishes at α/k = %s" % (alpha / float(k)).tolist())
    if mode == "lebesgue" and not in_hull_interior(alpha[None, :] / float(k), phi.slopes)[0]:
        raise DivergentIntegralError("α/k = %s lies on the boundary of the slope hull" % (alpha / float(k)).tolist())
    log_f = _entry_integrand(phi, alpha, k, measure_log_density(phi, polytope, mode, reference))
    _, estimate = quadrature.adaptive_rule(log_f, phi.dim, starts=density_starts(phi))
    return estimate - log_g


# --- Bergman function ---

@dataclass(eq=False)
class BergmanFunction:
    """
    B(x) = Σ_α g(α/k) e^{⟨α,x⟩ − kφ(x)} / c_α^raw, the g-weighted density of
    states; B dμ / N_k approximates MA_g(φ).
    """

    phi: object
    polytope: LatticePolytope
    k: int
    alphas: np.ndarray
    log_g: np.ndarray
    log_raw: np.ndarray
    log_mu: Callable[[np.ndarray], np.ndarray]
    n_points: int

    def log_value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points))
        offsets = self.log_g - self.log_raw
        for lo in range(0, len(points), _CHUNK):
            chunk = points[lo:lo + _CHUNK]
            exponents = chunk @ self.alphas.T - self.k * self.phi.values(chunk)[:, None] + offsets[None, :]
            out[lo:lo + _CHUNK] = logsumexp(exponents, axis=1)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_value(points))

    def log_measure_density(self, points: np.ndarray) -> np.ndarray:
        """log of (B/N_k) dμ/dx."""
        points = np.atleast_2d(points)
        return self.log_value(points) + self.log_mu(points) - np.log(self.n_points)

    def measure(self) -> DensityMeasure:
        return DensityMeasure(self.log_measure_density, self.phi.dim, starts=density_starts(self.phi))

    @property
    def expected_trace(self) -> float:
        """Σ_α g(α/k), the exact value of ∫ B dμ."""
        return float(np.sum(np.exp(self.log_g)))

    def trace(self) -> float:
        """∫ B dμ by an independent quadrature of the Bergman measure."""
        return self.measure().total_mass * self.n_points


def bergman_g(phi, polytope: LatticePolytope, k: int, mode: str = "volume", g: Optional[GWeight] = None,
              reference: Optional[ToricPotential] = None) -> BergmanFunction:
    g = g or GWeight.constant()
    basis = lattice_points(polytope, k)
    g_values = g(basis / float(k))
    active = g_values > 0
    log_raw, _ = _raw_entries(phi, polytope, k, mode, active, reference=reference)
    log_mu = measure_log_density(phi, polytope, mode, reference)
    return BergmanFunction(phi, polytope, k, basis[active].astype(float), np.log(g_values[active]),
                           log_raw[active], log_mu, len(basis))


# --- Spectral measures ---

@dataclass
class SpectralMeasure:
    """ν_k = (1/N_k) Σ δ_{α/k}, or its pushforward under p ↦ ⟨p, ξ⟩ when xi is set."""

    atoms: np.ndarray
    k: int
    xi: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.atoms)

    @property
    def masses(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def as_measure(self) -> AtomicMeasure:
        return AtomicMeasure(self.atoms, self.masses)

    def pair(self, u: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.mean(u(self.atoms)))

    def moments(self, degree: int) -> Dict[Tuple[int, ...], float]:
        """∫ p^β dν_k for |β| ≤ degree, keyed like dh_measure_moments."""
        n = self.atoms.shape[1]
        result = {}
        for beta in product(range(degree + 1), repeat=n):
            if sum(beta) > degree:
                continue
            result[beta] = float(np.mean(np.prod(self.atoms ** np.asarray(beta), axis=1)))
        return result

    def superlevel_fraction(self, lam: Sequence[float]) -> float:
        """N_k(λ)/N_k: the share of atoms with α/k ≥ λ componentwise."""
        lam = np.asarray(lam, dtype=float).reshape(-1)
        return float(np.mean(np.all(self.atoms >= lam - 1e-12, axis=1)))

    def rows(self):
        for atom in self.atoms:
            yield tuple(float(a) for a in atom) + (1.0 / self.size,)


def spectral_measure(polytope: LatticePolytope, k: int, xi: Optional[Sequence[float]] = None) -> SpectralMeasure:
    atoms = lattice_points(polytope, k) / float(k)
    if xi is None:
        return SpectralMeasure(atoms, k)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if len(xi) != polytope.dim:
        raise InputError("direction has %d components, polytope has dimension %d" % (len(xi), polytope.dim))
    return SpectralMeasure((atoms @ xi)[:, None], k, xi)


def discrete_soliton_weight(polytope: LatticePolytope, k: int, xi: Sequence[float]) -> GWeight:
    """g_V(p) = e^{⟨p,ξ⟩} / C_k with C_k the mean of e^{⟨α/k,ξ⟩}, so that Σ_α g_V(α/k) = N_k."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    atoms = lattice_points(polytope, k) / float(k)
    return GWeight.exp_linear(xi, normalization=float(np.mean(np.exp(atoms @ xi))))


# --- Quantized functionals ---

def energy_quantized(weights: HermitianWeights, reference: HermitianWeights, g: Optional[GWeight] = None) -> float:
    """E_g^{(k)}(H) = (1/(k N_k)) Σ_α g(α/k) (−log(c_α / c_α^ref))."""
    weights.check_compatible(reference)
    g = g or GWeight.constant()
    g_values = g(weights.spectrum)
    charged = g_values > 0
    if np.any(charged & (weights.excluded | reference.excluded)):
        raise InputError("weights exclude an entry where g is positive")
    delta = weights.log_weights[charged] - reference.log_weights[charged]
    return float(-np.dot(g_values[charged], delta) / (weights.k * weights.size))


def geodesic_quantized(start: HermitianWeights, end: HermitianWeights, t: float) -> HermitianWeights:
    """c_α(t) = c_α(0)^{1−t} c_α(1)^t."""
    start.check_compatible(end)
    if not np.array_equal(start.excluded, end.excluded):
        raise BasisMismatchError("geodesic endpoints exclude different entries")
    log_weights = np.full(start.size, np.inf)
    mask = start.included
    log_weights[mask] = (1.0 - t) * start.log_weights[mask] + t * end.log_weights[mask]
    return HermitianWeights(start.polytope, start.k, log_weights, start.basis)


def pullback(weights: HermitianWeights, eta: Sequence[float], t: float = 1.0) -> HermitianWeights:
    """exp(tW)^*H for W generated by η: log c_α − t⟨α, η⟩."""
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if len(eta) != weights.polytope.dim:
        raise InputError("direction has %d components, polytope has dimension %d" % (len(eta), weights.polytope.dim))
    shifted = weights.log_weights - t * (weights.basis @ eta)
    return HermitianWeights(weights.polytope, weights.k, shifted, weights.basis)


def l_functional(phi, phi0, polytope: LatticePolytope, k: int, mode: str = "volume",
                 g: Optional[GWeight] = None, reference: Optional[ToricPotential] = None) -> float:
    """L^{(k)}(φ) = E_g^{(k)}(Hilb(kφ, μ)) relative to Hilb(kφ0, μ); tends to E_g(φ) − E_g(φ0)."""
    weights = hilb(phi, polytope, k, mode, g, reference=reference)
    base = hilb(phi0, polytope, k, mode, g, reference=reference)
    return energy_quantized(weights, base, g)


def ding_quantized(weights: HermitianWeights, xi: Sequence[float],
                   reference: Optional[HermitianWeights] = None) -> FunctionalValue:
    """
    D_V^{(k)}(H) = −E_{g_V}^{(k)}(H) + L(FS(H)).

    g_V is normalized against the spectral measure, which makes the value
    invariant under H ↦ λH.
    """
    reference = reference if reference is not None else HermitianWeights.uniform(weights.polytope, weights.k)
    g_v = discrete_soliton_weight(weights.polytope, weights.k, xi)
    return FunctionalValue({
        "energy": -energy_quantized(weights, reference, g_v),
        "l": l_canonical(fs(weights)),
    })


# --- Donaldson's (μ, g)-iteration ---

@dataclass
class DonaldsonRun:
    weights: HermitianWeights
    trace: List[Dict] = field(default_factory=list)
    converged: bool = False
    mode: str = "volume"

    @property
    def potential(self) -> ToricPotential:
        return fs(self.weights)

    @property
    def residual(self) -> Optional[float]:
        return self.trace[-1]["residual"] if self.trace else None

    @property
    def ding_monotone(self) -> Optional[bool]:
        """False when the quantized Ding functional rose at some step; None without a recorded Ding."""
        flags = [entry["ding_increase"] for entry in self.trace if "ding_increase" in entry]
        return not any(flags) if flags else None

    def rows(self):
        for entry in self.trace:
            yield entry["step"], entry["residual"], entry.get("ding"), entry["energy"]


def donaldson_iterate(start: HermitianWeights, mode: str = "volume", g: Optional[GWeight] = None,
                      steps: Optional[int] = None, tol: Optional[float] = None,
                      xi: Optional[Sequence[float]] = None,
                      reference: Optional[ToricPotential] = None,
                      strict_ding: Optional[bool] = None) -> DonaldsonRun:
    """
    Iterates T = Hilb_{(μ,g)} ∘ FS from `start`.

    The residual at step m is ‖log c^{(m)} − log c^{(m−1)}‖ modulo constants;
    the run is balanced once it drops to `tol`. With xi the weight defaults
    to the discretely normalized g_V and the quantized Ding functional is
    recorded per step; a step where it rises is flagged in the trace, and
    raises under `strict_ding` (default: the `donaldson_strict_ding` setting).

    Raises:
        ConvergenceError: log-weights leave double range, or the quantized Ding
            functional rose under strict_ding.
        DivergentIntegralError: a Hilb entry diverges.
    """
    settings = config.load_settings()
    steps = steps or settings["donaldson_max_steps"]
    tol = tol if tol is not None else settings["donaldson_tol"]
    strict_ding = strict_ding if strict_ding is not None else settings.get("donaldson_strict_ding", False)
    window = settings["quadrature_window"] + settings["hilb_window_pad"]
    polytope, k = start.polytope, start.k
    if xi is not None and g is None:
        g = discrete_soliton_weight(polytope, k, xi)
    g = g or GWeight.constant()
    origin = start.normalized()
    current = origin
    previous_ding = ding_quantized(current, xi, origin).value if xi is not None else None
    trace = []
    rules = None
    residual = np.inf
    logger.info("Donaldson iteration on %s: k=%d, %s mode, g=%s, N_k=%d",
                polytope.name, k, mode, g.describe(), start.size)
    for step in range(1, steps + 1):
        phi = fs(current)
        reuse = rules if residual <= REBUILD_RESIDUAL else None
        updated, used = _hilb_with_rules(phi, polytope, k, mode, g, reuse, window, reference, normalize=False)
        if reuse is None:
            rules = used
        updated = updated.normalized()
        if np.max(np.abs(updated.log_weights[updated.included])) > LOG_WEIGHT_LIMIT:
            raise ConvergenceError("Donaldson iteration: log-weights left double range at step %d" % step,
                                   trace, residual)
        residual = updated.distance_mod_constants(current)
        entry = {"step": step, "residual": residual, "energy": energy_quantized(updated, origin, g)}
        if xi is not None:
            ding = ding_quantized(updated, xi, origin).value
            entry["ding"] = ding
            entry["ding_increase"] = bool(ding > previous_ding + DING_SLACK)
            if entry["ding_increase"]:
                message = "Quantized Ding increased at step %d: %.15g -> %.15g" % (step, previous_ding, ding)
                if strict_ding:
                    trace.append(entry)
                    raise ConvergenceError(message, trace, residual)
                logger.warning(message)
            previous_ding = ding
        trace.append(entry)
        logger.debug("Donaldson step %d: residual %.3e", step, residual)
        current = updated
        if residual <= tol:
            logger.info("Donaldson iteration balanced after %d steps (residual %.3e)", step, residual)
            return DonaldsonRun(current, trace, True, mode)
    logger.warning("Donaldson iteration stopped after %d steps with residual %.3e", steps, residual)
    return DonaldsonRun(current, trace, False, mode)


# --- Quantized solitons ---

@dataclass
class QuantizedSoliton:
    weights: HermitianWeights
    potential: ToricPotential
    residual: float
    run: DonaldsonRun
    xi: np.ndarray


def soliton_residual(phi, xi: Sequence[float], polytope: LatticePolytope, window: Optional[float] = None,
                     points: Optional[np.ndarray] = None) -> float:
    """
    Half the oscillation of log(det D²φ · g_V(∇φ) / vol P) + φ on a grid over
    |x_i| ≤ window: zero exactly when MA_{g_V}(φ) is a multiple of e^{−φ}dx there.
    """
    if getattr(phi, "is_max_affine", False):
        raise InputError("soliton residual needs a smooth potential")
    if points is None:
        window = window if window is not None else config.get_setting("soliton_window")
        per_axis = {1: 401, 2: 81}.get(phi.dim, 21)
        axis = np.linspace(-window, window, per_axis)
        points = np.stack(np.meshgrid(*([axis] * phi.dim), indexing='ij'), axis=-1).reshape(-1, phi.dim)
    points = np.atleast_2d(points)
    g_v = soliton_weight(xi, polytope)
    values = (phi.log_det_hessian(points) + g_v.log(phi.gradient(points)) - np.log(volume(polytope))
              + phi.values(points))
    if not np.all(np.isfinite(values)):
        raise InputError("soliton residual is not finite on the grid (degenerate Hessian)")
    return float((values.max() - values.min()) / 2.0)


def quantized_soliton(polytope: LatticePolytope, xi: Optional[Sequence[float]] = None, k: int = 8,
                      start: Optional[HermitianWeights] = None, steps: Optional[int] = None,
                      tol: Optional[float] = None) -> QuantizedSoliton:
    """
    The fixed point of Hilb_{(μ_φ, g_V)} ∘ FS at level k.

    Without xi the level-k soliton field is used, which makes every quantized
    Futaki invariant vanish; a fixed point can only exist in that case. The
    reported residual is measured against the continuum soliton equation for
    ξ* (or for xi when given).

    Raises:
        ConvergenceError: the iteration did not balance; carries the trace.
    """
    polytope.require_fano()
    if xi is None:
        iteration_xi = quantized_soliton_field(polytope, k).components
        residual_xi = soliton_field(polytope).components
    else:
        iteration_xi = residual_xi = np.asarray(xi, dtype=float).reshape(-1)
    start = start if start is not None else HermitianWeights.uniform(polytope, k)
    run = donaldson_iterate(start, "canonical", steps=steps, tol=tol, xi=iteration_xi)
    if not run.converged:
        raise ConvergenceError("quantized soliton at k=%d did not converge (residual %.3e)" % (k, run.residual),
                               run.trace, run.residual)
    potential = run.potential
    residual = soliton_residual(potential, residual_xi, polytope)
    logger.info("Quantized soliton on %s at k=%d: %d steps, soliton residual %.3e",
                polytope.name, k, len(run.trace), residual)
    return QuantizedSoliton(run.weights, potential, residual, run, iteration_xi)
