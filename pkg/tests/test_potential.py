import math

import numpy as np
import pytest

from scipy.optimize import linprog

from errors import EmptyEnvelopeError, InputError, TieError
from measures import GWeight
from polytope import interval, unit_simplex, unit_square, volume
from potential import (PotentialCombination, ToricPotential, combine, dual_cells, envelope, kahler_einstein_p1,
                       ma_measure, mass_of_superlevel, maximum, moment_map, prune, reference_potential,
                       sharpen_family, support_function)


@pytest.fixture
def lse3():
    return ToricPotential.from_coefficients([-1, 0, 1], [1.0, 1.0, 1.0], sharpness=1.0)


@pytest.fixture
def abs_value():
    return ToricPotential([[-1.0], [1.0]], [0.0, 0.0])


def test_log_sum_exp_values_and_derivatives(lse3):
    assert lse3(0.0) == pytest.approx(math.log(3.0))
    assert lse3.gradient(np.zeros((1, 1)))[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert lse3.hessian(np.zeros((1, 1)))[0, 0, 0] == pytest.approx(2 / 3)
    np.testing.assert_allclose(lse3(np.array([-1.0, 2.0])),
                               np.log(np.exp(-np.array([-1.0, 2.0])) + 1 + np.exp([-1.0, 2.0])))


def test_max_affine_values(abs_value):
    assert abs_value(2.0) == 2.0
    assert abs_value(-3.0) == 3.0
    assert abs_value.hessian(np.zeros((1, 1)))[0, 0, 0] == 0.0


def test_coefficients_must_be_positive():
    with pytest.raises(InputError):
        ToricPotential.from_coefficients([-1, 1], [1.0, 0.0])


def test_mismatched_lengths():
    with pytest.raises(InputError):
        ToricPotential([[0.0], [1.0]], [0.0])


def test_dict_round_trip(lse3, abs_value):
    restored = ToricPotential.from_dict(lse3.to_dict())
    assert restored(0.7) == pytest.approx(lse3(0.7), rel=1e-15)
    assert ToricPotential.from_dict(abs_value.to_dict()).is_max_affine
    from_coeffs = ToricPotential.from_dict({"slopes": [[-1], [1]], "coeffs": [1, 1], "sharpness": 2})
    assert from_coeffs(0.0) == pytest.approx(math.log(2.0) / 2)
    with pytest.raises(InputError):
        ToricPotential.from_dict({"coeffs": [1]})


def test_sharpening_decreases_to_max_affine(p1):
    family = sharpen_family(reference_potential(p1), [4, 1, 2])
    values = [phi(0.3) for phi in family]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(0.3)
    assert family[-1].is_max_affine


def test_kahler_einstein_p1_value():
    assert kahler_einstein_p1()(0.0) == pytest.approx(2 * math.log(2.0))


def test_moment_map_ties(abs_value):
    with pytest.raises(TieError) as info:
        moment_map(abs_value, 0.0)
    assert info.value.tied == (0, 1)
    np.testing.assert_array_equal(moment_map(abs_value, 0.0, subdifferential=True), [[-1.0], [1.0]])
    assert moment_map(abs_value, 0.5)[0] == 1.0


def test_dual_cells_two_vertices():
    phi = ToricPotential([[-1.0], [0.0], [1.0]], [0.0, 0.0, -1.0])
    cells = sorted(dual_cells(phi), key=lambda c: c.vertex[0])
    assert [c.vertex[0] for c in cells] == pytest.approx([0.0, 1.0])
    assert [c.value for c in cells] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_dual_cells_coplanar_lift():
    phi = ToricPotential([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0])
    cells = dual_cells(phi)
    assert len(cells) == 1
    np.testing.assert_allclose(cells[0].vertex, [0.0, 0.0], atol=1e-12)


def test_prune_drops_inactive_slope():
    phi = ToricPotential([[-1.0], [0.0], [1.0]], [0.0, -5.0, 0.0])
    pruned = prune(phi)
    assert pruned.size == 2
    assert pruned(0.3) == phi(0.3)


def test_atomic_ma_full_mass(square, p1):
    mu = ma_measure(support_function(square), GWeight.constant(), square)
    assert len(mu.masses) == 1
    assert mu.total_mass == pytest.approx(1.0)
    phi = ToricPotential([[-1.0], [0.0], [1.0]], [0.0, 0.0, -1.0])
    np.testing.assert_allclose(sorted(ma_measure(phi, GWeight.constant(), p1).masses), [0.5, 0.5])


def test_atomic_ma_mass_deficit(p1):
    phi = ToricPotential([[-0.5], [0.5]], [0.0, 0.0])
    assert not phi.has_full_mass(p1)
    assert ma_measure(phi, GWeight.constant(), p1).total_mass == pytest.approx(0.5)


def test_atomic_ma_with_step_weight(p1):
    mu = ma_measure(support_function(p1), GWeight.step([0.0]), p1)
    assert mu.total_mass == pytest.approx(0.5)


def test_smooth_ma_is_probability(p1, square):
    assert ma_measure(reference_potential(p1), GWeight.constant(), p1).total_mass == pytest.approx(1.0, abs=1e-8)
    assert ma_measure(reference_potential(square), GWeight.constant(), square).total_mass == pytest.approx(1.0, abs=1e-7)


def test_envelope_one_dimensional(p1, abs_value):
    projected = envelope(abs_value, [0.0], p1)
    assert projected(-3.0) == pytest.approx(0.0, abs=1e-12)
    assert projected(2.0) == pytest.approx(2.0)


def test_envelope_two_dimensional():
    phi = ToricPotential([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0])
    projected = envelope(phi, [0.5, 0.0])
    rng = np.random.default_rng(3)
    points = rng.uniform(-3, 3, size=(50, 2))
    expected = np.maximum.reduce([0.5 * points[:, 0], points[:, 0], 0.5 * points[:, 0] + 0.5 * points[:, 1]])
    np.testing.assert_allclose(projected.values(points), expected, atol=1e-12)


def test_envelope_is_below_potential(square):
    phi = reference_potential(square)
    projected = envelope(phi, [0.3, 0.6])
    points = np.random.default_rng(4).normal(size=(40, 2))
    assert np.all(projected.values(points) <= phi.max_affine().values(points) + 1e-12)


def test_empty_envelope(p1, abs_value):
    with pytest.raises(EmptyEnvelopeError):
        envelope(abs_value, [2.0], p1)


def test_mass_of_superlevel(p1, square):
    assert mass_of_superlevel(support_function(p1), [0.0], p1) == pytest.approx(0.5)
    assert mass_of_superlevel(support_function(square), [0.5, 0.5], square) == pytest.approx(0.25)


def test_combine_representations(p1, abs_value):
    smooth = combine(reference_potential(p1), kahler_einstein_p1(), 0.25)
    assert isinstance(smooth, PotentialCombination)
    assert smooth(0.0) == pytest.approx(0.75 * math.log(2) + 0.25 * 2 * math.log(2))
    assert combine(abs_value, abs_value.shift(1.0), 0.5)(0.4) == pytest.approx(0.9)
    with pytest.raises(InputError):
        combine(abs_value, reference_potential(p1), 0.5)


def test_maximum_of_max_affine(abs_value):
    other = ToricPotential([[0.0]], [1.0])
    result = maximum(abs_value, other)
    assert result(0.0) == 1.0
    assert result(3.0) == 3.0


# --- Randomized properties of MA_g and P_λ ---

def random_potential(polytope, rng, extra=5, shrink=1.0):
    """Max-affine φ whose slopes are the vertices of P plus random points of P, optionally shrunk."""
    vertices = polytope.vertices
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    inner = []
    while len(inner) < extra:
        p = rng.uniform(lo, hi)
        if polytope.contains(p[None, :])[0]:
            inner.append(p)
    slopes = np.vstack([vertices, inner])
    if shrink != 1.0:
        center = polytope.barycenter
        slopes = center + shrink * (slopes - center)
    return ToricPotential(slopes, rng.uniform(-1.0, 0.0, len(slopes)))


def weights_for(polytope):
    lam = {1: [0.2], 2: [0.1, 0.2]}[polytope.dim]
    xi = [0.7, -0.4][:polytope.dim]
    return [GWeight.constant(), GWeight.exp_linear(xi), GWeight.step(lam)]


POLYTOPES = [lambda: interval(-1, 1), unit_square, lambda: unit_simplex(2)]


@pytest.mark.parametrize("make_polytope", POLYTOPES)
def test_total_mass_theorem(make_polytope):
    polytope = make_polytope()
    rng = np.random.default_rng(polytope.dim + len(polytope.halfspaces))
    for g in weights_for(polytope):
        expected = g.mass(polytope)
        for _ in range(10):
            full = random_potential(polytope, rng)
            assert ma_measure(full, g, polytope).total_mass == pytest.approx(expected, rel=1e-10, abs=1e-12)
            shrunk = random_potential(polytope, rng, shrink=0.5)
            assert ma_measure(shrunk, g, polytope).total_mass < expected - 1e-6


@pytest.mark.parametrize("make_polytope", POLYTOPES)
def test_sandwich_bounds(make_polytope):
    polytope = make_polytope()
    rng = np.random.default_rng(17)
    for g in weights_for(polytope):
        low, high = g.bounds(polytope)
        for shrink in (1.0, 0.6):
            phi = random_potential(polytope, rng, shrink=shrink)
            plain = ma_measure(phi, GWeight.constant(), polytope).total_mass
            weighted = ma_measure(phi, g, polytope).total_mass
            assert low * plain - 1e-12 <= weighted <= high * plain + 1e-12


def test_sandwich_bounds_smooth(square):
    g = GWeight.exp_linear([0.5, -1.0])
    phi = reference_potential(square)
    low, high = g.bounds(square)
    weighted = ma_measure(phi, g, square).total_mass
    assert low - 1e-6 <= weighted <= high + 1e-6


@pytest.mark.parametrize("make_polytope", [lambda: interval(-1, 1), unit_square])
def test_superlevel_mass_matches_step_weight(make_polytope):
    polytope = make_polytope()
    rng = np.random.default_rng(5)
    phi = random_potential(polytope, rng, extra=6)
    lo, hi = polytope.vertices.min(axis=0), polytope.vertices.max(axis=0)
    for _ in range(20):
        lam = lo + (hi - lo) * rng.uniform(0.05, 0.95, polytope.dim)
        expected = np.prod(hi - lam) / volume(polytope)
        step = ma_measure(phi, GWeight.step(lam), polytope).total_mass
        assert mass_of_superlevel(phi, lam, polytope) == pytest.approx(expected, abs=1e-10)
        assert step == pytest.approx(expected, abs=1e-10)


def inf_over_translations(phi, lam, x):
    """min over t ≥ 0 of φ(x + t) − ⟨t, λ⟩ as a linear program in (t, s)."""
    n = phi.dim
    cost = np.concatenate([-lam, [1.0]])
    a_ub = np.column_stack([phi.slopes, -np.ones(phi.size)])
    b_ub = -(phi.slopes @ x + phi.intercepts)
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * n + [(None, None)], method='highs')
    assert result.status == 0
    return result.fun, result.x[:n]


ENVELOPE_INSTANCES = [
    ([[-1.0], [1.0]], [0.0, 0.0], [0.0]),
    ([[-1.0], [-0.5], [0.5], [1.0]], [0.0, 0.3, -0.2, -0.5], [0.25]),
    ([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0], [0.5, 0.0]),
    ([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]], [0.0, -0.2, 0.1, -0.6, 0.3], [0.3, 0.6]),
]


@pytest.mark.parametrize("slopes, intercepts, lam", ENVELOPE_INSTANCES)
def test_envelope_matches_inf_over_translations(slopes, intercepts, lam):
    phi = ToricPotential(slopes, intercepts)
    lam = np.asarray(lam)
    projected = envelope(phi, lam)
    n = phi.dim
    lipschitz = np.max(np.sum(np.abs(phi.slopes - lam), axis=1))
    rng = np.random.default_rng(8)
    for x in rng.uniform(-2.0, 2.0, size=(12, n)):
        exact, t_star = inf_over_translations(phi, lam, x)
        value = projected(x)
        assert value == pytest.approx(exact, abs=1e-9)

        reach = float(t_star.max()) + 0.5
        axis = np.linspace(0.0, reach, 401 if n == 1 else 161)
        grid = np.stack(np.meshgrid(*([axis] * n), indexing='ij'), axis=-1).reshape(-1, n)
        grid_min = float(np.min(phi.values(x + grid) - grid @ lam))
        spacing = axis[1] - axis[0]
        assert value <= grid_min + 1e-10
        assert grid_min - value <= lipschitz * spacing / 2 + 1e-10


def test_envelope_idempotent_and_translation_equivariant(square):
    rng = np.random.default_rng(21)
    phi = random_potential(square, rng, extra=6)
    lam = [0.3, 0.4]
    projected = envelope(phi, lam, square)
    points = rng.uniform(-3.0, 3.0, size=(60, 2))
    np.testing.assert_allclose(envelope(projected, lam, square).values(points), projected.values(points),
                               atol=1e-10)
    np.testing.assert_allclose(envelope(phi.shift(0.7), lam, square).values(points),
                               projected.values(points) + 0.7, atol=1e-10)
    assert np.all(projected.values(points) <= phi.values(points) + 1e-12)


def test_envelope_agrees_with_potential_where_moment_map_dominates(square):
    rng = np.random.default_rng(11)
    phi = random_potential(square, rng, extra=6)
    lam = np.array([0.35, 0.45])
    projected = envelope(phi, lam, square)
    points = rng.uniform(-3.0, 3.0, size=(400, 2))
    affine = phi.affine_values(points)
    ordered = np.sort(affine, axis=1)
    clear = ordered[:, -1] - ordered[:, -2] > 1e-3
    slopes = phi.slopes[affine.argmax(axis=1)]
    margin = np.min(slopes - lam, axis=1)
    dominated, below = clear & (margin > 1e-3), clear & (margin < -1e-3)
    assert dominated.any() and below.any()

    gap = phi.values(points) - projected.values(points)
    np.testing.assert_allclose(gap[dominated], 0.0, atol=1e-10)
    np.testing.assert_array_equal(projected.gradient(points[dominated]), slopes[dominated])
    assert np.all(gap[below] > 1e-12)


def test_sharpened_measures_converge_weakly(p1):
    phi = ToricPotential([[-1.0], [0.0], [1.0]], [0.0, 1.5, -1.0], sharpness=1.0)
    family = sharpen_family(phi, [2, 4, 8, 16, 32])
    limit = ma_measure(family[-1], GWeight.constant(), p1)
    np.testing.assert_allclose(sorted(limit.points[:, 0]), [-1.5, 2.5], atol=1e-12)
    tests = [lambda x: x[:, 0] ** 2, lambda x: np.cosh(x[:, 0] / 2), lambda x: np.exp(x[:, 0] / 3)]
    for u in tests:
        errors = []
        for smooth in family[:-1]:
            measure = ma_measure(smooth, GWeight.constant(), p1)
            assert measure.total_mass == pytest.approx(1.0, abs=1e-6)
            errors.append(abs(measure.pair(u) - limit.pair(u)))
        assert all(a > b for a, b in zip(errors, errors[1:]))


@pytest.mark.parametrize("make_polytope", [lambda: interval(-1, 1), unit_square])
def test_comparison_principle(make_polytope):
    polytope = make_polytope()
    rng = np.random.default_rng(31)
    for trial in range(20):
        g = GWeight.constant() if trial % 2 else GWeight.exp_linear([0.8, -0.3][:polytope.dim])
        phi, psi = random_potential(polytope, rng), random_potential(polytope, rng)
        mu_phi, mu_psi = ma_measure(phi, g, polytope), ma_measure(psi, g, polytope)

        def above(points):
            return psi.values(points) > phi.values(points) + 1e-9

        lhs = mu_psi.masses[above(mu_psi.points)].sum()
        rhs = mu_phi.masses[above(mu_phi.points)].sum()
        assert lhs <= rhs + 1e-12


def mass_at(measure, x, tol=1e-9):
    near = np.linalg.norm(measure.points - x, axis=1) <= tol
    return float(measure.masses[near].sum())


@pytest.mark.parametrize("make_polytope", [lambda: interval(-1, 1), unit_square])
def test_maximum_keeps_common_lower_bound(make_polytope):
    polytope = make_polytope()
    rng = np.random.default_rng(41)
    g = GWeight.exp_linear([0.5, 0.25][:polytope.dim])
    common = 0
    for _ in range(20):
        shared = random_potential(polytope, rng, extra=3)

        def with_private_pieces():
            extra = random_potential(polytope, rng, extra=2)
            slopes = np.vstack([shared.slopes, extra.slopes[-2:]])
            intercepts = np.concatenate([shared.intercepts, rng.uniform(-1.5, -0.8, 2)])
            return ToricPotential(slopes, intercepts)

        phi, psi = with_private_pieces(), with_private_pieces()
        mu_phi, mu_psi = ma_measure(phi, g, polytope), ma_measure(psi, g, polytope)
        mu_max = ma_measure(maximum(phi, psi), g, polytope)
        for x, m in zip(mu_phi.points, mu_phi.masses):
            other = mass_at(mu_psi, x)
            if other == 0.0:
                continue
            common += 1
            assert mass_at(mu_max, x) >= min(m, other) - 1e-12
    assert common > 0


def test_gradient_matches_central_differences(bl1p2):
    phi = reference_potential(bl1p2)
    points = np.random.default_rng(2).normal(scale=1.5, size=(100, 2))
    h = 1e-5
    numeric = np.stack([(phi.values(points + h * e) - phi.values(points - h * e)) / (2 * h)
                        for e in np.eye(2)], axis=1)
    analytic = phi.gradient(points)
    scale = np.maximum(1.0, np.linalg.norm(analytic, axis=1))
    assert np.max(np.linalg.norm(numeric - analytic, axis=1) / scale) <= 1e-6
    assert np.all(bl1p2.contains(analytic, tol=1e-12))


def test_coplanar_lift_carries_full_mass(square):
    slopes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    phi = ToricPotential(slopes, slopes @ np.array([0.5, -0.25]))
    measure = ma_measure(phi, GWeight.constant(), square)
    assert len(measure.masses) == 1
    np.testing.assert_allclose(measure.points[0], [-0.5, 0.25], atol=1e-12)
    assert measure.masses[0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("height", [1e-6, 1e-12])
def test_nearly_inactive_piece_keeps_total_mass(square, height):
    slopes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    phi = ToricPotential(slopes, [0.0, 0.0, 0.0, 0.0, height])
    measure = ma_measure(phi, GWeight.constant(), square)
    assert np.all(measure.masses >= 0.0)
    assert measure.total_mass == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(measure.points, 0.0, atol=1e-5)


def test_twin_slopes_keep_total_mass(square):
    slopes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.5 + 1e-15, 0.5]])
    phi = ToricPotential(slopes, [0.0, 0.0, 0.0, 0.0, 0.4, 0.4])
    measure = ma_measure(phi, GWeight.constant(), square)
    assert np.all(measure.masses >= 0.0)
    assert measure.total_mass == pytest.approx(1.0, abs=1e-12)
    assert envelope(phi, [0.25, 0.25], square).slopes.min() >= 0.25
