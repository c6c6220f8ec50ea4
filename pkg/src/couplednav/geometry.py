"""Geometric kernel: ray casting, collision tests and obstacle angle determination.

Obstacles are discs. All angles are radians; headings and bearings are wrapped
into (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class VehicleInsideObstacle(ValueError):
    """The vehicle position lies inside (or on the edge of) an obstacle disc."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    wrapped = np.remainder(angles, TWO_PI)  # [0, 2pi)
    return np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class Obstacle:
    center_x: float
    center_y: float
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned rectangle enclosing the world."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def from_size(cls, width: float, height: float) -> "Bounds":
        return cls(0.0, 0.0, float(width), float(height))

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (
            self.xmin + margin <= x <= self.xmax - margin
            and self.ymin + margin <= y <= self.ymax - margin
        )


@dataclass(frozen=True)
class AngularInterval:
    """Bearings subtended by an obstacle as seen from the vehicle.

    ``lower`` and ``upper`` are wrapped, so ``lower > upper`` when the interval
    straddles the +-pi seam.
    """

    lower: float
    upper: float

    @property
    def half_width(self) -> float:
        return 0.5 * wrap_angle(self.upper - self.lower)

    @property
    def center(self) -> float:
        return wrap_angle(self.lower + self.half_width)

    def contains(self, bearing: float) -> bool:
        return abs(wrap_angle(bearing - self.center)) <= self.half_width


def _center_offset(vehicle: Pose2D, obs: Obstacle) -> tuple[float, float]:
    """Distance and bearing from the vehicle position to the obstacle center."""
    dx = obs.center_x - vehicle.x
    dy = obs.center_y - vehicle.y
    distance = math.hypot(dx, dy)
    if distance <= obs.radius:
        raise VehicleInsideObstacle(
            f"vehicle at ({vehicle.x:.3f}, {vehicle.y:.3f}) is within obstacle "
            f"centred at ({obs.center_x:.3f}, {obs.center_y:.3f}) r={obs.radius:.3f}"
        )
    return distance, math.atan2(dy, dx)


def obstacle_angular_interval(vehicle: Pose2D, obs: Obstacle) -> AngularInterval:
    distance, bearing = _center_offset(vehicle, obs)
    half_width = math.asin(obs.radius / distance)
    return AngularInterval(wrap_angle(bearing - half_width), wrap_angle(bearing + half_width))


def heading_obstacle_deviation(vehicle: Pose2D, obs: Obstacle) -> float:
    """Angular distance from the heading to the nearer edge of the obstacle.

    Zero when the heading points into the obstacle, edges included.
    """
    distance, bearing = _center_offset(vehicle, obs)
    half_width = math.asin(obs.radius / distance)
    offset = abs(wrap_angle(vehicle.heading - bearing))
    return max(0.0, offset - half_width)


def min_deviation_in_range(
    vehicle: Pose2D, obstacles: Iterable[Obstacle], sensing_radius: float = 5.0
) -> Optional[float]:
    """Smallest heading deviation among obstacles whose edge is within range.

    Returns None when no obstacle is close enough.
    """
    if not sensing_radius > 0:
        raise ValueError("sensing_radius must be positive")
    best: Optional[float] = None
    for obs in obstacles:
        gap = math.hypot(obs.center_x - vehicle.x, obs.center_y - vehicle.y) - obs.radius
        if gap > sensing_radius:
            continue
        deviation = heading_obstacle_deviation(vehicle, obs)
        if best is None or deviation < best:
            best = deviation
    return best


def _ray_disc_distance(ox: float, oy: float, ux: float, uy: float, obs: Obstacle) -> float:
    fx = ox - obs.center_x
    fy = oy - obs.center_y
    c = fx * fx + fy * fy - obs.radius * obs.radius
    if c <= 0.0:
        return 0.0
    b = fx * ux + fy * uy
    disc = b * b - c
    if disc < 0.0 or b > 0.0:
        return math.inf
    return -b - math.sqrt(disc)


def _ray_wall_distance(ox: float, oy: float, ux: float, uy: float, bounds: Bounds) -> float:
    if not bounds.contains(ox, oy):
        return 0.0
    t = math.inf
    if ux > 0.0:
        t = min(t, (bounds.xmax - ox) / ux)
    elif ux < 0.0:
        t = min(t, (bounds.xmin - ox) / ux)
    if uy > 0.0:
        t = min(t, (bounds.ymax - oy) / uy)
    elif uy < 0.0:
        t = min(t, (bounds.ymin - oy) / uy)
    return t


def cast_ray(
    origin: tuple[float, float],
    bearing: float,
    obstacles: Iterable[Obstacle],
    bounds: Optional[Bounds],
    max_range: float,
) -> float:
    """Distance along ``bearing`` to the first obstacle or wall, clamped to max_range.

    ``bounds=None`` means an unbounded world.
    """
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    ox, oy = float(origin[0]), float(origin[1])
    ux, uy = math.cos(bearing), math.sin(bearing)
    best = max_range
    if bounds is not None:
        best = min(best, _ray_wall_distance(ox, oy, ux, uy, bounds))
    for obs in obstacles:
        best = min(best, _ray_disc_distance(ox, oy, ux, uy, obs))
    return best


def obstacle_arrays(obstacles: Sequence[Obstacle]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack obstacles as (cx, cy, r) arrays for the vectorised kernels."""
    cx = np.array([o.center_x for o in obstacles], dtype=np.float64)
    cy = np.array([o.center_y for o in obstacles], dtype=np.float64)
    r = np.array([o.radius for o in obstacles], dtype=np.float64)
    return cx, cy, r


def cast_rays(
    ox: float,
    oy: float,
    bearings: np.ndarray,
    cx: np.ndarray,
    cy: np.ndarray,
    r: np.ndarray,
    bounds: Bounds,
    max_range: float,
) -> np.ndarray:
    """Vectorised :func:`cast_ray` over many bearings; obstacles given as arrays."""
    ux = np.cos(bearings)
    uy = np.sin(bearings)
    if not bounds.contains(ox, oy):
        return np.zeros_like(bearings)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(ux > 0, (bounds.xmax - ox) / ux, np.where(ux < 0, (bounds.xmin - ox) / ux, np.inf))
        ty = np.where(uy > 0, (bounds.ymax - oy) / uy, np.where(uy < 0, (bounds.ymin - oy) / uy, np.inf))
    dist = np.minimum(np.minimum(tx, ty), max_range)
    if cx.size:
        fx = ox - cx  # (n_obs,)
        fy = oy - cy
        c = fx * fx + fy * fy - r * r
        if np.any(c <= 0.0):
            return np.zeros_like(bearings)
        b = ux[:, None] * fx[None, :] + uy[:, None] * fy[None, :]  # (n_rays, n_obs)
        disc = b * b - c[None, :]
        hit = (disc >= 0.0) & (b <= 0.0)
        t = np.where(hit, -b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
        dist = np.minimum(dist, t.min(axis=1))
    return dist


def check_collision(
    vehicle: Pose2D, vehicle_radius: float, obstacles: Iterable[Obstacle], bounds: Bounds
) -> bool:
    """True iff the vehicle disc touches an obstacle or leaves the world rectangle."""
    if not vehicle_radius > 0:
        raise ValueError("vehicle_radius must be positive")
    if not bounds.contains(vehicle.x, vehicle.y, margin=vehicle_radius):
        return True
    for obs in obstacles:
        reach = obs.radius + vehicle_radius
        dx = obs.center_x - vehicle.x
        dy = obs.center_y - vehicle.y
        if dx * dx + dy * dy <= reach * reach:
            return True
    return False
