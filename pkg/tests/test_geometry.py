import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from couplednav.geometry import (
    Bounds,
    Obstacle,
    Pose2D,
    VehicleInsideObstacle,
    cast_ray,
    cast_rays,
    check_collision,
    heading_obstacle_deviation,
    min_deviation_in_range,
    obstacle_angular_interval,
    obstacle_arrays,
    wrap_angle,
    wrap_angles,
)

# arcsin(1/5), evaluated independently with mpmath to 40 digits.
ASIN_ONE_FIFTH = 0.2013579207903308
BIG = Bounds(-100.0, -100.0, 100.0, 100.0)


def dense_deviation(vehicle: Pose2D, obs: Obstacle, n: int = 2_000_001) -> float:
    """Brute-force deviation: sample headings, keep those whose ray hits the disc."""
    th = np.linspace(-np.pi, np.pi, n)
    dx, dy = obs.center_x - vehicle.x, obs.center_y - vehicle.y
    along = np.cos(th) * dx + np.sin(th) * dy
    perp = np.abs(np.cos(th) * dy - np.sin(th) * dx)
    hits = th[(along >= 0) & (perp <= obs.radius)]
    return float(np.min(np.abs(wrap_angles(vehicle.heading - hits))))


@pytest.mark.parametrize(
    "angle, expected",
    [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi), (-0.5, -0.5), (2 * math.pi + 0.25, 0.25)],
)
def test_wrap_angle(angle, expected):
    assert wrap_angle(angle) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e4, 1e4))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    v = float(wrap_angles(np.array([a]))[0])
    assert -math.pi < v <= math.pi
    assert math.isclose(math.cos(v), math.cos(a), abs_tol=1e-9)


def test_pose_heading_wrapped():
    assert Pose2D(0, 0, 3 * math.pi).heading == pytest.approx(math.pi)


def test_obstacle_radius_positive():
    with pytest.raises(ValueError):
        Obstacle(0, 0, 0.0)


class TestAngularInterval:
    def test_head_on(self):
        iv = obstacle_angular_interval(Pose2D(0, 0, 0), Obstacle(5, 0, 1))
        assert iv.center == pytest.approx(0.0, abs=1e-15)
        assert iv.half_width == pytest.approx(ASIN_ONE_FIFTH, abs=1e-15)
        assert iv.lower == pytest.approx(-ASIN_ONE_FIFTH)
        assert iv.upper == pytest.approx(ASIN_ONE_FIFTH)

    def test_thirty_degree_identity(self):
        iv = obstacle_angular_interval(Pose2D(0, 0, 0), Obstacle(0, 5, 5 * math.sin(math.pi / 6)))
        assert iv.half_width == pytest.approx(math.pi / 6, abs=1e-12)
        assert iv.center == pytest.approx(math.pi / 2, abs=1e-12)

    def test_inside_raises(self):
        with pytest.raises(VehicleInsideObstacle):
            obstacle_angular_interval(Pose2D(0, 0, 0), Obstacle(3, 0, 3.5))

    def test_straddles_seam(self):
        iv = obstacle_angular_interval(Pose2D(0, 0, 0), Obstacle(-5, 0, 1))
        assert iv.lower > iv.upper
        assert iv.contains(math.pi)
        assert iv.half_width == pytest.approx(ASIN_ONE_FIFTH)

    def test_half_width_decreases_with_distance(self):
        widths = [obstacle_angular_interval(Pose2D(0, 0), Obstacle(d, 0, 1)).half_width for d in np.linspace(1.01, 50, 200)]
        assert all(a > b for a, b in zip(widths, widths[1:]))


class TestDeviation:
    def test_head_on_zero(self):
        assert heading_obstacle_deviation(Pose2D(0, 0, 0), Obstacle(5, 0, 1)) == 0.0

    def test_perpendicular(self):
        dev = heading_obstacle_deviation(Pose2D(0, 0, math.pi / 2), Obstacle(5, 0, 1))
        assert dev == pytest.approx(math.pi / 2 - ASIN_ONE_FIFTH, abs=1e-12)
        assert dev == pytest.approx(1.3694384060045657, abs=1e-12)
        # dense-sampling oracle has grid spacing ~3e-6 rad
        assert dev == pytest.approx(dense_deviation(Pose2D(0, 0, math.pi / 2), Obstacle(5, 0, 1)), abs=1e-5)

    def test_edge_counts_as_inside(self):
        assert heading_obstacle_deviation(Pose2D(0, 0, math.asin(0.2)), Obstacle(5, 0, 1)) == 0.0

    def test_inside_raises(self):
        with pytest.raises(VehicleInsideObstacle):
            heading_obstacle_deviation(Pose2D(0, 0, 0), Obstacle(3, 0, 3.5))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_sampling(self, seed):
        rng = np.random.default_rng(seed)
        vehicle = Pose2D(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
        obs = Obstacle(*rng.uniform(4, 8, 2) * rng.choice([-1, 1], 2), rng.uniform(0.3, 2.0))
        assert heading_obstacle_deviation(vehicle, obs) == pytest.approx(dense_deviation(vehicle, obs), abs=1e-5)

    @settings(max_examples=300)
    @given(
        st.floats(-10, 10), st.floats(-10, 10), st.floats(-4, 4),
        st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 3), st.floats(-10, 10),
    )
    def test_range_and_rotation_equivariance(self, x, y, h, ox, oy, r, rot):
        if math.hypot(ox - x, oy - y) <= r * 1.001:
            return
        vehicle, obs = Pose2D(x, y, h), Obstacle(ox, oy, r)
        dev = heading_obstacle_deviation(vehicle, obs)
        assert 0.0 <= dev <= math.pi
        c, s = math.cos(rot), math.sin(rot)
        rv = Pose2D(c * x - s * y, s * x + c * y, h + rot)
        ro = Obstacle(c * ox - s * oy, s * ox + c * oy, r)
        assert heading_obstacle_deviation(rv, ro) == pytest.approx(dev, abs=1e-9)


class TestMinDeviation:
    def test_none_in_range(self):
        assert min_deviation_in_range(Pose2D(0, 0), [Obstacle(20, 0, 1)], 5.0) is None
        assert min_deviation_in_range(Pose2D(0, 0), [], 5.0) is None

    def test_minimum_of_two(self):
        # obstacles placed so their deviations are exactly 0.3 and 1.1 rad
        def at_deviation(dev, d=4.0, r=1.0):
            bearing = dev + math.asin(r / d)
            return Obstacle(d * math.cos(bearing), d * math.sin(bearing), r)

        obstacles = [at_deviation(1.1), at_deviation(0.3)]
        assert [heading_obstacle_deviation(Pose2D(0, 0), o) for o in obstacles] == pytest.approx([1.1, 0.3])
        assert min_deviation_in_range(Pose2D(0, 0), obstacles, 5.0) == pytest.approx(0.3)

    def test_range_filter_uses_edge_distance(self):
        far = Obstacle(0, 7.0, 1.0)  # edge 6.0 m away
        near = Obstacle(4.0, 0, 1.0)
        assert min_deviation_in_range(Pose2D(0, 0, math.pi / 2), [far], 5.0) is None
        only_near = min_deviation_in_range(Pose2D(0, 0, math.pi / 2), [far, near], 5.0)
        assert only_near == pytest.approx(heading_obstacle_deviation(Pose2D(0, 0, math.pi / 2), near))

    def test_sensing_radius_positive(self):
        with pytest.raises(ValueError):
            min_deviation_in_range(Pose2D(0, 0), [], 0.0)

    def test_inside_propagates(self):
        with pytest.raises(VehicleInsideObstacle):
            min_deviation_in_range(Pose2D(0, 0), [Obstacle(0.5, 0, 1)], 5.0)


class TestCastRay:
    def test_obstacle_hit(self):
        assert cast_ray((0, 0), 0.0, [Obstacle(5, 0, 1)], None, 10.0) == pytest.approx(4.0, abs=1e-12)

    def test_hit_matches_bisection(self):
        obs = Obstacle(5, 1.5, 1.0)
        bearing = 0.2
        ux, uy = math.cos(bearing), math.sin(bearing)
        inside = lambda s: (s * ux - 5) ** 2 + (s * uy - 1.5) ** 2 <= 1.0
        grid = np.linspace(0, 10, 100_001)
        first = grid[np.argmax([inside(s) for s in grid])]
        lo, hi = first - 1e-4, first
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if inside(mid) else (mid, hi)
        assert cast_ray((0, 0), bearing, [obs], None, 10.0) == pytest.approx(hi, abs=1e-9)

    def test_wall_hit(self):
        assert cast_ray((0, 0), math.pi, [], Bounds(-5, -5, 5, 5), 10.0) == pytest.approx(5.0, abs=1e-12)

    def test_clamp(self):
        assert cast_ray((0, 0), 1.0, [], None, 3.0) == 3.0
        assert cast_ray((0, 0), 1.0, [], BIG, 3.0) == 3.0

    def test_behind_is_ignored(self):
        assert cast_ray((0, 0), math.pi, [Obstacle(5, 0, 1)], None, 10.0) == 10.0

    def test_monotone_as_obstacle_moves_onto_path(self):
        dists = [cast_ray((0, 0), 0.0, [Obstacle(5, y, 1)], BIG, 10.0) for y in np.linspace(3, 0, 61)]
        assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
        assert max(dists) <= 10.0

    @pytest.mark.parametrize("seed", range(10))
    def test_vectorised_matches_scalar(self, seed):
        rng = np.random.default_rng(seed)
        bounds = Bounds(0, 0, 10, 15)
        obstacles = [Obstacle(*rng.uniform(2, 8, 2), rng.uniform(0.3, 0.8)) for _ in range(6)]
        ox, oy = rng.uniform(0.5, 9.5), rng.uniform(0.5, 14.5)
        bearings = rng.uniform(-math.pi, math.pi, 32)
        vec = cast_rays(ox, oy, bearings, *obstacle_arrays(obstacles), bounds, 5.0)
        ref = [cast_ray((ox, oy), b, obstacles, bounds, 5.0) for b in bearings]
        np.testing.assert_allclose(vec, ref, rtol=0, atol=1e-12)


class TestCollision:
    def test_clear(self):
        assert not check_collision(Pose2D(0, 0), 0.2, [Obstacle(5, 0, 1)], BIG)

    def test_overlap(self):
        assert check_collision(Pose2D(4, 0), 0.2, [Obstacle(5, 0, 1)], BIG)

    def test_out_of_bounds(self):
        assert check_collision(Pose2D(-0.1, -0.1), 0.2, [], Bounds(0, 0, 10, 15))
        assert check_collision(Pose2D(0.1, 5.0), 0.2, [], Bounds(0, 0, 10, 15))

    def test_radius_positive(self):
        with pytest.raises(ValueError):
            check_collision(Pose2D(0, 0), 0.0, [], BIG)
