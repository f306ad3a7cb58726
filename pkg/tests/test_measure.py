import numpy as np
import pytest

from betatree.geometry import Ball
from betatree.measure import (
    CoveringPair,
    GridIndex,
    PackingMeasure,
    PointMeasure,
    ZeroMassError,
    ball_mass,
    center_of_mass,
    minkowski_volume,
    packing_number,
    rescale,
)


def line_measure(count=11, weight=1.0):
    xs = np.linspace(0.0, 1.0, count)
    return PointMeasure(np.column_stack([xs, np.zeros(count)]), np.full(count, weight))


class TestBallMass:
    def test_empty_measure(self):
        mu = PointMeasure(np.zeros((0, 2)), np.zeros(0))
        assert ball_mass(mu, Ball(np.zeros(2), 1.0)) == 0.0

    def test_strict_openness(self):
        mu = PointMeasure(np.array([[0.0], [2.0]]), np.array([1.0, 1.0]))
        assert ball_mass(mu, Ball(np.array([0.0]), 1.0)) == 1.0

    def test_boundary_atom_excluded(self):
        mu = PointMeasure(np.array([[0.0], [1.0]]), np.array([1.0, 1.0]))
        assert ball_mass(mu, Ball(np.array([0.0]), 1.0)) == 1.0

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(11)
        mu = PointMeasure(rng.normal(size=(60, 2)), rng.uniform(0.1, 1.0, 60))
        center = rng.normal(size=2)
        masses = [ball_mass(mu, Ball(center, r)) for r in (0.2, 0.5, 1.0, 2.0, 4.0)]
        assert all(a <= b for a, b in zip(masses, masses[1:]))

    def test_additive_over_disjoint_restrictions(self):
        rng = np.random.default_rng(12)
        mu = PointMeasure(rng.normal(size=(40, 2)), rng.uniform(0.1, 1.0, 40))
        left = mu.positions[:, 0] < 0
        ball = Ball(np.zeros(2), 3.0)
        total = ball_mass(mu.restrict(left), ball) + ball_mass(mu.restrict(~left), ball)
        assert total == pytest.approx(ball_mass(mu, ball), abs=1e-12)


class TestCenterOfMass:
    def test_symmetric_pair(self):
        mu = PointMeasure(np.array([[0.0], [1.0]]), np.array([1.0, 1.0]))
        assert center_of_mass(mu, Ball(np.array([0.5]), 2.0)) == pytest.approx([0.5])

    def test_weighted_mean(self):
        mu = PointMeasure(np.array([[0.0, 0.0], [4.0, 0.0]]), np.array([1.0, 3.0]))
        com = center_of_mass(mu, Ball(np.zeros(2), 10.0))
        assert np.allclose(com, [3.0, 0.0])

    def test_zero_mass_raises(self):
        mu = line_measure()
        with pytest.raises(ZeroMassError):
            center_of_mass(mu, Ball(np.array([50.0, 50.0]), 0.5))

    def test_com_in_closed_ball(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            mu = PointMeasure(rng.normal(size=(30, 3)), rng.uniform(0.0, 1.0, 30))
            ball = Ball(rng.normal(size=3), float(rng.uniform(0.5, 3.0)))
            idx = mu.atoms_in(ball)
            if np.sum(mu.weights[idx]) <= 0:
                continue
            com = center_of_mass(mu, ball)
            assert np.linalg.norm(com - ball.center) <= ball.radius + 1e-12


class TestRescale:
    def test_identity(self):
        mu = line_measure()
        nu = rescale(mu, np.zeros(2), 1.0, 1)
        assert np.allclose(nu.positions, mu.positions)
        assert np.allclose(nu.weights, mu.weights)

    def test_formula(self):
        mu = PointMeasure(np.array([[2.0, 0.0]]), np.array([1.0]))
        nu = rescale(mu, np.array([2.0, 0.0]), 2.0, 1)
        assert np.allclose(nu.positions, [[0.0, 0.0]])
        assert nu.weights[0] == pytest.approx(0.5)

    def test_round_trip(self):
        rng = np.random.default_rng(14)
        mu = PointMeasure(rng.normal(size=(25, 2)), rng.uniform(0.1, 2.0, 25))
        x = rng.normal(size=2)
        r = 1.7
        back = rescale(rescale(mu, x, r, 1), -x / r, 1.0 / r, 1)
        assert np.allclose(back.positions, mu.positions, atol=1e-12)
        assert np.allclose(back.weights, mu.weights, rtol=1e-12)


class TestGridIndex:
    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(15)
        for trial in range(30):
            pts = rng.normal(size=(rng.integers(1, 200), rng.integers(1, 4)))
            index = GridIndex(pts)
            center = rng.normal(size=pts.shape[1])
            radius = float(rng.uniform(0.1, 3.0))
            brute = np.nonzero(np.sum((pts - center) ** 2, axis=1) < radius**2)[0]
            assert np.array_equal(index.query(center, radius), brute)

    def test_empty(self):
        index = GridIndex(np.zeros((0, 2)))
        assert index.query(np.zeros(2), 1.0).size == 0


class TestCoveringPair:
    def test_split(self):
        cov = CoveringPair(np.array([[0.0], [1.0]]), np.array([0.5, 0.0]))
        assert cov.plus_centers.shape[0] == 1
        assert cov.zero_centers.shape[0] == 1

    def test_support_containment_enforced(self):
        mu = line_measure()
        with pytest.raises(ValueError):
            CoveringPair(np.array([[10.0, 10.0]]), np.array([0.0]), mu=mu)

    def test_radius_cap(self):
        with pytest.raises(ValueError):
            CoveringPair(np.array([[0.0]]), np.array([2.0]), max_radius=1.0)

    def test_for_measure(self):
        mu = line_measure()
        cov = CoveringPair.for_measure(mu)
        assert cov.centers.shape == mu.positions.shape
        assert np.all(cov.radii == 0)


class TestPackingMeasure:
    def test_empty(self):
        pm = PackingMeasure.empty(1, 2)
        assert packing_number(pm) == 0.0

    def test_dirac_arithmetic(self):
        pm = PackingMeasure(
            1,
            np.zeros((0, 2)), np.zeros(0),
            np.zeros((3, 2)), np.full(3, 0.1),
        )
        assert packing_number(pm) == pytest.approx(0.3)

    def test_segment_hausdorff_weights(self):
        xs = np.linspace(0, 1, 101)
        pm = PackingMeasure(
            1,
            np.column_stack([xs, np.zeros(101)]), np.full(101, 0.01),
            np.zeros((0, 2)), np.zeros(0),
        )
        assert packing_number(pm) == pytest.approx(1.0, rel=0.05)


class TestMinkowskiVolume:
    def test_segment_tube(self):
        xs = np.linspace(0, 1, 400)
        samples = np.column_stack([xs, np.zeros(400)])
        domain = Ball(np.array([0.5, 0.0]), 2.0)
        vol = minkowski_volume(samples, 0.1, domain, 0.02)
        exact = 2 * 0.1 * 1.0 + np.pi * 0.1**2
        assert vol == pytest.approx(exact, rel=0.05)

    def test_empty_set(self):
        assert minkowski_volume(np.zeros((0, 2)), 0.1, Ball(np.zeros(2), 1.0), 0.02) == 0.0

    def test_point_disk(self):
        vol = minkowski_volume(np.zeros((1, 2)), 0.5, Ball(np.zeros(2), 2.0), 0.05)
        assert vol == pytest.approx(np.pi * 0.25, rel=0.05)

    def test_grid_too_coarse(self):
        with pytest.raises(ValueError):
            minkowski_volume(np.zeros((1, 2)), 0.1, Ball(np.zeros(2), 1.0), 0.5)


class TestSerialization:
    def test_csv_round_trip_byte_stable(self):
        rng = np.random.default_rng(16)
        mu = PointMeasure(rng.normal(size=(20, 3)), rng.uniform(0, 2, 20))
        text = mu.to_csv()
        again = PointMeasure.from_csv(text)
        assert text == again.to_csv()
        assert np.array_equal(again.positions, mu.positions)
        assert np.array_equal(again.weights, mu.weights)

    def test_csv_header(self):
        mu = line_measure(3)
        assert mu.to_csv().splitlines()[0] == "x1,x2,weight"

    def test_json_round_trip(self):
        rng = np.random.default_rng(17)
        mu = PointMeasure(rng.normal(size=(10, 2)), rng.uniform(0, 2, 10))
        again = PointMeasure.from_json(mu.to_json())
        assert np.array_equal(again.positions, mu.positions)
        assert np.array_equal(again.weights, mu.weights)

    def test_bad_csv_diagnostics(self):
        with pytest.raises(ValueError, match="row 2"):
            PointMeasure.from_csv("x1,weight\n1.0\n")

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            PointMeasure(np.zeros((1, 2)), np.array([-1.0]))
