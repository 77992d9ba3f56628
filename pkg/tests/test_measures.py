import math

import numpy as np
import pytest

from errors import InputError
from measures import AtomicMeasure, DensityMeasure, GWeight, parse_g
from polytope import ConvexRegion


def test_constant_weight_is_probability(p1, square):
    assert GWeight.constant().mass(p1) == pytest.approx(1.0)
    assert GWeight.constant().mass(square) == pytest.approx(1.0)
    assert GWeight.constant(2.0).mass(square) == pytest.approx(2.0)


def test_exp_linear_normalization(p1, bl1p2):
    g = GWeight.exp_linear([0.7]).normalized(p1)
    assert g.mass(p1) == pytest.approx(1.0, rel=1e-13)
    g2 = GWeight.exp_linear([0.3, -0.2]).normalized(bl1p2)
    assert g2.mass(bl1p2) == pytest.approx(1.0, rel=1e-13)
    assert g2.log(np.array([[1.0, 0.5]]))[0] == pytest.approx(math.log(g2(np.array([[1.0, 0.5]]))[0]))


def test_step_weight_mass_and_bounds(p1, square):
    g = GWeight.step([0.0])
    assert g.mass(p1) == pytest.approx(0.5)
    assert g.bounds(p1) == (0.0, 1.0)
    assert g.log(np.array([[-0.5]]))[0] == -np.inf
    assert GWeight.step([0.5, 0.5]).mass(square) == pytest.approx(0.25)


def test_table_weight(square):
    axes = [np.linspace(0, 1, 3), np.linspace(0, 1, 3)]
    g = GWeight.table(axes, np.full((3, 3), 2.0))
    assert g.mass(square) == pytest.approx(2.0, rel=1e-12)
    assert g.normalized(square).mass(square) == pytest.approx(1.0, rel=1e-12)


def test_negative_table_rejected():
    with pytest.raises(InputError):
        GWeight.table([np.array([0.0, 1.0])], np.array([1.0, -1.0]))


def test_integrate_affine(p1):
    simplices = [np.array([[-1.0], [1.0]])]
    assert GWeight.constant().integrate_affine(simplices, [1.0], 2.0) == pytest.approx(4.0)
    assert GWeight.exp_linear([1.0]).integrate_affine(simplices, [1.0], 0.0) == pytest.approx(2 / math.e, rel=1e-13)
    assert GWeight.step([0.0]).integrate_affine(simplices, [1.0], 0.0) == pytest.approx(0.5)


def test_integrate_region_and_segment(square):
    region = ConvexRegion.from_polytope(square).clip([1.0, 0.0], 0.5)
    assert GWeight.constant().integrate_region(region) == pytest.approx(0.5)
    assert GWeight.step([0.25, 0.0]).integrate_region(region) == pytest.approx(0.25)
    a, b = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    assert GWeight.step([0.25, 0.0]).integrate_segment(a, b) == pytest.approx(0.75)
    assert GWeight.exp_linear([1.0, 0.0]).integrate_segment(a, b) == pytest.approx(math.e - 1, rel=1e-13)


def test_parse_g():
    assert parse_g("const", 2).kind == "constant"
    g = parse_g("exp:0.5,-1", 2)
    assert g.kind == "exp_linear" and g.xi == (0.5, -1.0)
    assert parse_g(g.describe(), 2).xi == g.xi
    assert parse_g("step:0", 1).lam == (0.0,)
    with pytest.raises(InputError):
        parse_g("exp:0.5", 2)
    with pytest.raises(InputError):
        parse_g("wave:1", 1)
    with pytest.raises(InputError):
        parse_g("exp:a", 1)


def test_atomic_measure():
    mu = AtomicMeasure([[0.0], [2.0]], [1.0, 3.0])
    assert mu.total_mass == 4.0
    assert mu.pair(lambda x: x[:, 0]) == 6.0
    assert mu.normalized().total_mass == pytest.approx(1.0)
    assert list(mu.rows())[1] == [2.0, 3.0]
    with pytest.raises(InputError):
        AtomicMeasure([[0.0]], [-1.0])
    with pytest.raises(InputError):
        AtomicMeasure([[0.0], [1.0]], [1.0])


def test_density_measure_gaussian():
    mu = DensityMeasure(lambda x: -0.5 * x[:, 0] ** 2 - 0.5 * math.log(2 * math.pi), 1)
    assert mu.total_mass == pytest.approx(1.0, abs=1e-9)
    assert mu.pair(lambda x: x[:, 0] ** 2) == pytest.approx(1.0, abs=1e-9)


def test_density_measure_on_box():
    mu = DensityMeasure.from_density(lambda x: x[:, 0], 1, box=([0.0], [1.0]))
    assert mu.total_mass == pytest.approx(0.5, rel=1e-12)
    assert mu.pair(lambda x: x[:, 0]) == pytest.approx(1 / 3, rel=1e-12)
