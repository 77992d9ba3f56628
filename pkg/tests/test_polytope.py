import json
import math
from fractions import Fraction

import numpy as np
import pytest

from errors import CapacityError, DegeneratePolytopeError, InputError
from polytope import (ConvexRegion, LatticePolytope, clip_polygon, dh_measure_moments, divided_difference_exp,
                      in_hull_interior, integrate_exp_linear, interval, lattice_points, load_polytope,
                      named_polytope, polygon_area, polytope_from_dict, volume, volume_exact)


def test_interval_vertices_and_volume(p1):
    np.testing.assert_array_equal(p1.vertices, [[-1.0], [1.0]])
    assert volume(p1) == 2.0
    assert p1.origin_interior
    assert p1.is_reflexive


def test_lattice_points_of_dilates(p1):
    points = lattice_points(p1, 2)
    np.testing.assert_array_equal(points[:, 0], [-2, -1, 0, 1, 2])


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_ehrhart_counts(simplex, square, k):
    assert len(lattice_points(simplex, k)) == (k + 1) * (k + 2) // 2
    assert len(lattice_points(square, k)) == (k + 1) ** 2


def test_p2_reflexive_triangle(p2):
    assert volume_exact(p2) == Fraction(9, 2)
    assert len(lattice_points(p2, 1)) == 10
    assert p2.is_reflexive
    np.testing.assert_allclose(p2.barycenter, [0.0, 0.0], atol=1e-15)


def test_bl1p2_quadrilateral(bl1p2):
    vertices = {tuple(v) for v in bl1p2.vertices}
    assert vertices == {(-1.0, 0.0), (0.0, -1.0), (2.0, -1.0), (-1.0, 2.0)}
    assert volume_exact(bl1p2) == 4
    assert len(lattice_points(bl1p2, 1)) == 9
    np.testing.assert_allclose(bl1p2.barycenter, [1 / 12, 1 / 12], atol=1e-15)


def test_contains_and_distance(square):
    inside = square.contains(np.array([[0.5, 0.5], [1.0, 0.0], [1.5, 0.2]]))
    np.testing.assert_array_equal(inside, [True, True, False])
    strict = square.contains(np.array([[1.0, 0.0]]), strict=True)
    assert not strict[0]
    assert square.distance_to_boundary([0.25, 0.5]) == pytest.approx(0.25)


def test_require_fano_rejects_boundary_origin(unit_interval):
    assert not unit_interval.origin_interior
    with pytest.raises(InputError):
        unit_interval.require_fano()


def test_empty_intersection_is_degenerate():
    with pytest.raises(DegeneratePolytopeError):
        LatticePolytope((((1,), 0), ((-1,), -1)))


def test_unbounded_is_degenerate():
    with pytest.raises(DegeneratePolytopeError):
        LatticePolytope((((1, 0), 1), ((0, 1), 1)))


def test_lower_dimensional_is_degenerate():
    with pytest.raises(DegeneratePolytopeError):
        LatticePolytope((((1, 0), 0), ((-1, 0), 0), ((0, 1), 1), ((0, -1), 1)))


def test_non_integral_data_rejected():
    with pytest.raises(InputError):
        LatticePolytope((((1,), 0.5), ((-1,), 1)))


def test_dict_round_trip(bl1p2):
    restored = polytope_from_dict(bl1p2.to_dict())
    assert restored.halfspaces == bl1p2.halfspaces
    assert restored.name == "Bl1P2"


def test_declared_dim_mismatch():
    data = {"dim": 2, "halfspaces": [{"normal": [1], "offset": 1}, {"normal": [-1], "offset": 1}]}
    with pytest.raises(InputError):
        polytope_from_dict(data)


def test_load_polytope_reports_json_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"halfspaces": [\n  {"normal": [1], "offset": 1},\n  oops\n]}')
    with pytest.raises(InputError, match="line 3"):
        load_polytope(str(path))


def test_load_polytope_from_file_and_builtin(tmp_path):
    path = tmp_path / "square.json"
    path.write_text(json.dumps(named_polytope("square").to_dict()))
    assert volume(load_polytope(str(path))) == 1.0
    assert load_polytope("builtin:test_interval").vertices[-1, 0] == 2.0


def test_unknown_builtin():
    with pytest.raises(InputError, match="unknown polytope"):
        named_polytope("p7")


def test_lattice_capacity():
    huge = interval(-10 ** 7, 10 ** 7)
    with pytest.raises(CapacityError):
        lattice_points(huge, 1)


def test_dilation_must_be_positive(p1):
    with pytest.raises(InputError):
        lattice_points(p1, 0)


def test_dh_moments_exact(p1, simplex):
    moments = dh_measure_moments(p1, 2, exact=True)
    assert moments[(0,)] == 1
    assert moments[(1,)] == 0
    assert moments[(2,)] == Fraction(1, 3)
    tri = dh_measure_moments(simplex, 2, exact=True)
    assert tri[(1, 0)] == Fraction(1, 3)
    assert tri[(2, 0)] == Fraction(1, 6)
    assert tri[(1, 1)] == Fraction(1, 12)


def test_divided_difference_repeated_nodes():
    assert divided_difference_exp([0.0, 0.0, 0.0]) == pytest.approx(0.5, rel=1e-14)
    assert divided_difference_exp([0.0, 1.0]) == pytest.approx(math.e - 1.0, rel=1e-13)


def test_integrate_exp_linear_interval(p1):
    assert integrate_exp_linear(p1, [1.0]) == pytest.approx(math.e - 1 / math.e, rel=1e-13)
    assert integrate_exp_linear(p1, [1.0], moment=[1]) == pytest.approx(2 / math.e, rel=1e-13)
    assert integrate_exp_linear(p1, [0.0]) == pytest.approx(2.0, rel=1e-15)


def test_integrate_exp_linear_coincident_vertex_values(simplex):
    # ⟨p,ξ⟩ takes the value 1 at two vertices
    assert integrate_exp_linear(simplex, [1.0, 1.0]) == pytest.approx(1.0, rel=1e-13)


def test_integrate_exp_linear_dimension_mismatch(simplex):
    with pytest.raises(InputError):
        integrate_exp_linear(simplex, [1.0])


def test_clip_polygon_halves_square():
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    clipped = clip_polygon(square, (1.0, 0.0), 0.5)
    assert polygon_area(clipped) == pytest.approx(0.5)


def test_convex_region_clipping(square, p1):
    region = ConvexRegion.from_polytope(square).clip_many(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert region.volume() == pytest.approx(0.5)
    np.testing.assert_allclose(region.centroid(), [1 / 3, 1 / 3], atol=1e-14)
    segment = ConvexRegion.from_polytope(p1).clip([-1.0], 0.25)
    assert segment.volume() == pytest.approx(1.25)
    assert ConvexRegion.from_polytope(p1).clip([1.0], -2.0).is_empty


def test_in_hull_interior():
    points = np.array([[-1.0], [1.0]])
    np.testing.assert_array_equal(in_hull_interior(np.array([[0.0], [1.0], [1.5]]), points), [True, False, False])
    triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(in_hull_interior(np.array([[0.2, 0.2], [0.5, 0.5]]), triangle), [True, False])


def test_clip_polygon_is_exact():
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    normal, offset = (0.1, 0.3), 0.2
    clipped = clip_polygon(square, normal, offset)
    assert all(isinstance(c, Fraction) for v in clipped for c in v)
    a, b, c = Fraction(0.1), Fraction(0.3), Fraction(0.2)
    cut = [v for v in clipped if v not in [(0, 0), (1, 0), (1, 1), (0, 1)]]
    assert len(cut) == 2
    assert all(a * x + b * y == c for x, y in cut)


def test_complementary_clips_partition_exactly(square):
    region = ConvexRegion.from_polytope(square)
    rng = np.random.default_rng(9)
    for _ in range(20):
        normal = rng.normal(size=2)
        offset = float(normal @ rng.uniform(0.0, 1.0, 2))
        inside, outside = region.clip(normal, offset), region.clip(-normal, -offset)
        assert inside.volume_exact() + outside.volume_exact() == 1


def test_clip_against_coincident_lines_is_empty(square):
    t = 1 / 3
    sliver = ConvexRegion.from_polytope(square).clip([1.0, 0.0], t).clip([-1.0, 0.0], -t)
    assert sliver.is_empty
    assert sliver.volume_exact() == 0
    assert sliver.simplices() == []
