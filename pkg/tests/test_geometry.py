import numpy as np
import pytest

from betatree.geometry import (
    AffinePlane,
    Ball,
    DimensionMismatchError,
    RankDeficiencyError,
    general_position,
    grassmann_distance,
    operator_norm_power,
    orthonormal_frame,
    plane_distance,
    project,
    projection_matrix,
    slice_hausdorff,
    verify_graphical,
)


def random_plane(rng, n, k):
    return AffinePlane.from_span(rng.normal(size=n), rng.normal(size=(k, n)))


class TestProject:
    def test_axis_projection(self):
        plane = AffinePlane.axis_plane(2, [0])
        assert np.allclose(project(plane, [3.0, 4.0]), [3.0, 0.0])

    def test_point_on_plane_fixed(self):
        plane = AffinePlane.axis_plane(2, [0])
        assert np.allclose(project(plane, [2.5, 0.0]), [2.5, 0.0])

    def test_affine_offset(self):
        plane = AffinePlane(np.array([0.0, 1.0]), np.array([[1.0, 0.0]]))
        assert np.allclose(project(plane, [2.0, 5.0]), [2.0, 1.0])

    def test_idempotent_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = rng.integers(2, 5)
            k = rng.integers(1, n)
            plane = random_plane(rng, n, k)
            x = rng.normal(size=n)
            once = project(plane, x)
            assert np.allclose(project(plane, once), once, atol=1e-10)

    def test_pythagoras_random(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            k = int(rng.integers(1, n))
            plane = random_plane(rng, n, k)
            x = rng.normal(size=n)
            lhs = float(np.sum((x - plane.base) ** 2))
            tangent = float(np.sum((project(plane, x) - plane.base) ** 2))
            normal = plane_distance(x, plane) ** 2
            assert lhs == pytest.approx(tangent + normal, abs=1e-9)


class TestPlaneDistance:
    def test_unit_above_axis(self):
        assert plane_distance(np.array([0.0, 1.0]), AffinePlane.axis_plane(2, [0])) == pytest.approx(1.0)

    def test_zero_on_plane(self):
        assert plane_distance(np.array([5.0, 0.0]), AffinePlane.axis_plane(2, [0])) == pytest.approx(0.0)

    def test_xy_plane_in_r3(self):
        plane = AffinePlane.axis_plane(3, [0, 1])
        assert plane_distance(np.array([1.0, 1.0, 1.0]), plane) == pytest.approx(1.0)


class TestGrassmann:
    def test_identical_planes(self):
        p = AffinePlane.axis_plane(3, [0, 1])
        assert grassmann_distance(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_lines(self):
        l1 = AffinePlane.axis_plane(2, [0])
        l2 = AffinePlane.axis_plane(2, [1])
        assert grassmann_distance(l1, l2) == pytest.approx(1.0, abs=1e-8)

    def test_lines_at_pi_over_6(self):
        theta = np.pi / 6.0
        l1 = AffinePlane.axis_plane(2, [0])
        l2 = AffinePlane(np.zeros(2), np.array([[np.cos(theta), np.sin(theta)]]))
        assert grassmann_distance(l1, l2) == pytest.approx(0.5, abs=1e-8)

    def test_parallel_distinct_planes_distance_zero(self):
        # translation parts are discarded by definition
        l1 = AffinePlane.axis_plane(2, [0], base=[0.0, 0.0])
        l2 = AffinePlane.axis_plane(2, [0], base=[0.0, 5.0])
        assert grassmann_distance(l1, l2) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            grassmann_distance(AffinePlane.axis_plane(3, [0]), AffinePlane.axis_plane(3, [0, 1]))

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(21)
        res = 1.0 / 64.0
        slack = 2.0 * res
        for _ in range(40):
            n = int(rng.integers(2, 4))
            k = int(rng.integers(1, n))
            a, b, c = (random_plane(rng, n, k) for _ in range(3))
            dab = grassmann_distance(a, b, res)
            dba = grassmann_distance(b, a, res)
            assert dab == pytest.approx(dba, abs=1e-12)
            dac = grassmann_distance(a, c, res)
            dcb = grassmann_distance(c, b, res)
            assert dab <= dac + dcb + slack + 1e-8

    def test_tilting_equivalence_sandwich(self):
        # d_G <= |p1 - p2|_op <= 2 d_G, operator norm by power iteration
        rng = np.random.default_rng(22)
        res = 1.0 / 64.0
        for _ in range(500):
            n = int(rng.integers(2, 4))
            k = int(rng.integers(1, n))
            p1 = random_plane(rng, n, k)
            p2 = random_plane(rng, n, k)
            dg = grassmann_distance(p1, p2, res)
            opn = operator_norm_power(projection_matrix(p1) - projection_matrix(p2))
            assert dg <= opn + 1e-9
            assert opn <= 2.0 * dg + 2.0 * res + 1e-9


class TestGeneralPosition:
    def test_simplex_vertices(self):
        pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        assert general_position(pts, 0.5)

    def test_collinear_fails(self):
        pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]
        assert not general_position(pts, 1e-6)

    def test_near_collinear_below_rho(self):
        # third point sits 0.05 above the span of the first two
        pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.05]]
        assert not general_position(pts, 0.1)
        assert general_position(pts, 0.04)

    def test_monotone_in_rho(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            pts = rng.normal(size=(3, 3))
            rho = float(rng.uniform(0.01, 0.5))
            if general_position(pts, rho):
                assert general_position(pts, rho * 0.5)
                assert general_position(pts, rho * 0.1)


class TestVerifyGraphical:
    def test_samples_on_plane(self):
        plane = AffinePlane.axis_plane(2, [0])
        xs = np.linspace(-0.9, 0.9, 50)
        samples = np.column_stack([xs, np.zeros_like(xs)])
        est = verify_graphical(samples, plane, Ball(np.zeros(2), 1.0))
        assert est is not None
        assert est.c1_norm == pytest.approx(0.0, abs=1e-12)

    def test_linear_graph_norm(self):
        # y = 0.1 x over the x-axis on B_1: r^-1 sup|f| + |Df| is about 0.2
        plane = AffinePlane.axis_plane(2, [0])
        xs = np.linspace(-0.99, 0.99, 400)
        samples = np.column_stack([xs, 0.1 * xs])
        est = verify_graphical(samples, plane, Ball(np.zeros(2), 1.0))
        assert est is not None
        assert est.c1_norm == pytest.approx(0.2, rel=0.10)

    def test_vertical_pair_fails(self):
        plane = AffinePlane.axis_plane(2, [0])
        samples = np.array([[0.0, 0.0], [0.0, 1.0]])
        assert verify_graphical(samples, plane, Ball(np.zeros(2), 2.0)) is None

    def test_empty_samples_error(self):
        plane = AffinePlane.axis_plane(2, [0])
        with pytest.raises(ValueError):
            verify_graphical(np.array([[5.0, 5.0]]), plane, Ball(np.zeros(2), 1.0))


class TestFrames:
    def test_orthonormalization(self):
        rng = np.random.default_rng(3)
        vecs = rng.normal(size=(3, 5))
        frame = orthonormal_frame(vecs)
        assert np.allclose(frame @ frame.T, np.eye(3), atol=1e-12)

    def test_rank_deficiency_raises(self):
        with pytest.raises(RankDeficiencyError):
            orthonormal_frame(np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_plane_rejects_k_equal_n(self):
        with pytest.raises(ValueError):
            AffinePlane(np.zeros(2), np.eye(2))


class TestSliceHausdorff:
    def test_same_plane_zero(self):
        plane = AffinePlane.axis_plane(2, [0])
        ball = Ball(np.zeros(2), 1.0)
        assert slice_hausdorff(plane, plane, ball) == pytest.approx(0.0, abs=1e-12)

    def test_tilted_line(self):
        theta = 0.1
        l1 = AffinePlane.axis_plane(2, [0])
        l2 = AffinePlane(np.zeros(2), np.array([[np.cos(theta), np.sin(theta)]]))
        ball = Ball(np.zeros(2), 1.0)
        d = slice_hausdorff(l1, l2, ball)
        assert d == pytest.approx(np.sin(theta), abs=2e-2)
