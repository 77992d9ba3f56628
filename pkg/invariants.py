# invariants.py

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from errors import ConvergenceError, InputError
from polytope import LatticePolytope, integrate_exp_linear, lattice_points, volume

logger = logging.getLogger(__name__)


@dataclass
class TorusDirection:
    """An element ξ of the Lie algebra of the torus; role "V" (soliton field) or "W" (probe)."""

    components: np.ndarray
    role: str = "V"
    residual: Optional[float] = None

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.components)):
            raise InputError("torus direction must be finite")
        if self.role not in ("V", "W"):
            raise InputError("torus direction role must be V or W, got %r" % self.role)

    def __array__(self, dtype=None, copy=None):
        return self.components if dtype is None else self.components.astype(dtype)

    @property
    def dim(self) -> int:
        return len(self.components)

    def to_dict(self) -> Dict:
        return {"xi": self.components.tolist(), "role": self.role, "grad_norm": self.residual}


def parse_direction(text: str, dim: int, role: str = "V") -> TorusDirection:
    """Comma-separated reals, e.g. --xi "0.5,-1"."""
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError("cannot parse direction %r" % text)
    if len(values) != dim:
        raise InputError("direction %r needs %d components" % (text, dim))
    return TorusDirection(values, role)


def _vector(xi, dim: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if len(xi) != dim:
        raise InputError("direction has %d components, polytope has dimension %d" % (len(xi), dim))
    return xi


def _unit_moments(dim: int) -> List[Tuple[int, ...]]:
    return [tuple(1 if j == i else 0 for j in range(dim)) for i in range(dim)]


def exp_moments(polytope: LatticePolytope, xi) -> Tuple[float, np.ndarray, np.ndarray]:
    """F(ξ) = ∫_P e^{⟨p,ξ⟩} dp with its gradient ∫ p e^{⟨p,ξ⟩} dp and Hessian ∫ p pᵀ e^{⟨p,ξ⟩} dp."""
    n = polytope.dim
    xi = _vector(xi, n)
    value = integrate_exp_linear(polytope, xi)
    gradient = np.array([integrate_exp_linear(polytope, xi, m) for m in _unit_moments(n)])
    hessian = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            moment = [0] * n
            moment[a] += 1
            moment[b] += 1
            hessian[a, b] = hessian[b, a] = integrate_exp_linear(polytope, xi, moment)
    return value, gradient, hessian


# --- Futaki invariants ---

def futaki_continuum(polytope: LatticePolytope, xi, eta) -> float:
    """Fut_V(W) = −∫_P ⟨p,η⟩ g_V dν = −∫_P ⟨p,η⟩ e^{⟨p,ξ⟩} dp / ∫_P e^{⟨p,ξ⟩} dp."""
    n = polytope.dim
    xi, eta = _vector(xi, n), _vector(eta, n)
    total = integrate_exp_linear(polytope, xi)
    first = np.array([integrate_exp_linear(polytope, xi, m) for m in _unit_moments(n)])
    return float(-(first @ eta) / total)


def futaki_quantized(polytope: LatticePolytope, xi, eta, k: int) -> float:
    """Fut_{V,k}(W) = −Σ_{α ∈ kP} e^{⟨α,ξ⟩/k} ⟨α,η⟩."""
    n = polytope.dim
    xi, eta = _vector(xi, n), _vector(eta, n)
    alphas = lattice_points(polytope, k).astype(float)
    return float(-np.dot(np.exp(alphas @ xi / k), alphas @ eta))


def normalized_quantized_futaki(value: float, polytope: LatticePolytope, xi, k: int,
                                n_points: Optional[int] = None) -> float:
    """
    Rescales Fut_{V,k} to the continuum normalization: Fut_{V,k} / (k N_k C),
    C = ∫_P e^{⟨p,ξ⟩} dν the normalization of g_V.
    """
    n_points = n_points if n_points is not None else len(lattice_points(polytope, k))
    normalization = integrate_exp_linear(polytope, _vector(xi, polytope.dim)) / volume(polytope)
    return value / (k * n_points * normalization)


@dataclass
class FutakiReport:
    continuum: float
    ks: List[int]
    quantized: List[float]
    normalized: List[float]
    coefficients: List[float]
    fit_residual: float
    leading_estimate: float
    rate_constant: float
    errors: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "continuum": self.continuum,
            "coefficients": self.coefficients,
            "fit_residual": self.fit_residual,
            "leading_estimate": self.leading_estimate,
            "rate_constant": self.rate_constant,
        }

    def rows(self):
        for k, q, v, e in zip(self.ks, self.quantized, self.normalized, self.errors):
            yield k, q, v, e


def futaki_limit_check(polytope: LatticePolytope, xi, eta, k_max: int) -> FutakiReport:
    """
    Compares (1/(kN_k)) Fut_{V,k} with Fut_V for k = 1..k_max.

    Fut_{V,k} is fitted by least squares to Σ_m c_m k^{n+1−m}, m = 0..n+1; the
    leading coefficient over vol(P)·C estimates Fut_V. The O(1/k) rate constant
    is fitted on the normalized errors.

    Raises:
        InputError: k_max < n + 2 leaves the fit rank deficient.
    """
    n = polytope.dim
    if k_max < n + 2:
        raise InputError("futaki_limit_check needs k_max >= %d for a degree-%d fit, got %d" % (n + 2, n + 1, k_max))
    xi, eta = _vector(xi, n), _vector(eta, n)
    continuum = futaki_continuum(polytope, xi, eta)
    ks = list(range(1, k_max + 1))
    quantized, normalized = [], []
    for k in ks:
        n_points = len(lattice_points(polytope, k))
        value = futaki_quantized(polytope, xi, eta, k)
        quantized.append(value)
        normalized.append(normalized_quantized_futaki(value, polytope, xi, k, n_points))

    powers = np.arange(n + 1, -1, -1)
    scale = float(k_max)
    design = (np.asarray(ks, dtype=float)[:, None] / scale) ** powers[None, :]
    solution, _, rank, _ = np.linalg.lstsq(design, np.asarray(quantized), rcond=None)
    if rank < len(powers):
        raise InputError("Futaki expansion fit is rank deficient (rank %d)" % rank)
    coefficients = solution / scale ** powers
    fit_residual = float(np.max(np.abs(design @ solution - np.asarray(quantized))))
    c_norm = integrate_exp_linear(polytope, xi) / volume(polytope)
    leading = float(coefficients[0] / (volume(polytope) * c_norm))

    errors = [abs(v - continuum) for v in normalized]
    inverse_k = 1.0 / np.asarray(ks, dtype=float)
    rate = float(np.dot(inverse_k, errors) / np.dot(inverse_k, inverse_k))
    logger.info("Futaki limit check on %s: continuum %.10g, leading estimate %.10g, rate %.3g",
                polytope.name, continuum, leading, rate)
    return FutakiReport(continuum, ks, quantized, normalized, coefficients.tolist(), fit_residual,
                        leading, rate, errors)


# --- Soliton fields ---

def _newton(objective, polytope: LatticePolytope, label: str) -> TorusDirection:
    """Damped Newton from ξ = 0 for a strictly convex objective returning (value, gradient, Hessian)."""
    settings = config.load_settings()
    tol, max_iter = settings["newton_tol"], settings["newton_max_iter"]
    xi = np.zeros(polytope.dim)
    value, gradient, hessian = objective(xi)
    trace = []
    for iteration in range(max_iter):
        grad_norm = float(np.linalg.norm(gradient))
        trace.append({"iter": iteration, "grad_norm": grad_norm, "value": value})
        logger.debug("%s Newton step %d: |grad F| = %.3e", label, iteration, grad_norm)
        if grad_norm <= tol:
            logger.info("%s on %s: ξ = %s after %d steps", label, polytope.name, xi.tolist(), iteration)
            return TorusDirection(xi, "V", grad_norm)
        if np.linalg.eigvalsh(hessian).min() <= 0:
            raise ConvergenceError("%s: Hessian lost positive definiteness" % label, trace, grad_norm)
        step = -np.linalg.solve(hessian, gradient)
        tau = 1.0
        while True:
            candidate = xi + tau * step
            new_value, new_gradient, new_hessian = objective(candidate)
            # near ξ* the value stalls at rounding level while the gradient still shrinks
            if new_value <= value or np.linalg.norm(new_gradient) < grad_norm or tau < 1e-8:
                break
            tau /= 2.0
        if np.array_equal(candidate, xi):
            break
        xi, value, gradient, hessian = candidate, new_value, new_gradient, new_hessian
    grad_norm = float(np.linalg.norm(gradient))
    raise ConvergenceError("%s did not reach |grad F| <= %.1e (got %.3e)" % (label, tol, grad_norm), trace, grad_norm)


def soliton_field(polytope: LatticePolytope) -> TorusDirection:
    """
    The critical point of the strictly convex F(ξ) = ∫_P e^{⟨p,ξ⟩} dp.

    At ξ*, ∫_P p e^{⟨p,ξ*⟩} dp = 0, so Fut_V vanishes in every direction.
    """
    polytope.require_fano()
    return _newton(lambda xi: exp_moments(polytope, xi), polytope, "Soliton field")


def quantized_soliton_field(polytope: LatticePolytope, k: int) -> TorusDirection:
    """
    The critical point of F_k(ξ) = Σ_{α ∈ kP} e^{⟨α/k,ξ⟩}; every quantized
    Futaki invariant Fut_{V,k} vanishes there.
    """
    polytope.require_fano()
    points = lattice_points(polytope, k).astype(float) / k

    def objective(xi):
        weights = np.exp(points @ xi)
        return (float(weights.sum()), weights @ points, np.einsum('m,ma,mb->ab', weights, points, points))
    return _newton(objective, polytope, "Quantized soliton field (k=%d)" % k)
