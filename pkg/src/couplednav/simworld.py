"""Discrete-time unicycle simulation of the vehicle in a field of disc obstacles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import (
    Bounds,
    Obstacle,
    Pose2D,
    cast_rays,
    check_collision,
    min_deviation_in_range,
    obstacle_arrays,
    wrap_angle,
)

DT = 0.1
V_MAX = 2.0
OMEGA_MAX = 1.0
SPEED_DELTA = 0.2
STEER_DELTA = 0.3
N_RAYS = 16
MAX_RANGE = 5.0
SENSING_RADIUS = 5.0
MAX_STEPS = 500
VEHICLE_RADIUS = 0.2
OBSERVATION_SIZE = N_RAYS + 4
N_ACTIONS = 9
RADIUS_RANGE = (0.3, 0.8)
CLEARANCE = 1.0
OBSTACLE_GAP = 0.6
PLACEMENT_ATTEMPTS = 10_000
MIN_GOAL_DISTANCE = 3.0
LAYOUT = "uniform"

# Ray bearings relative to the heading, spread over the front half-plane.
RAY_OFFSETS = np.linspace(-math.pi / 2, math.pi / 2, N_RAYS)

# Observation layout: [rays(16), goal_distance, goal_bearing, speed, angular_rate].
OBS_GOAL_DISTANCE = N_RAYS
OBS_GOAL_BEARING = N_RAYS + 1
OBS_SPEED = N_RAYS + 2
OBS_ANGULAR_RATE = N_RAYS + 3

_SPEED_STEPS = (-SPEED_DELTA, 0.0, SPEED_DELTA)
_STEER_STEPS = (-STEER_DELTA, 0.0, STEER_DELTA)


class InvalidWorld(ValueError):
    pass


class PlacementFailed(RuntimeError):
    pass


class SteppedAfterDone(RuntimeError):
    pass


def action_deltas(index: int) -> tuple[float, float]:
    """Map an action index to (speed delta, angular-rate delta).

    ``index = 3 * speed_choice + steer_choice`` where each choice is
    0 = decrease, 1 = hold, 2 = increase. Index 4 holds both.
    """
    if not 0 <= index < N_ACTIONS:
        raise ValueError(f"action index must be in [0, {N_ACTIONS - 1}], got {index}")
    return _SPEED_STEPS[index // 3], _STEER_STEPS[index % 3]


def action_index(speed_choice: int, steer_choice: int) -> int:
    return 3 * speed_choice + steer_choice


HOLD = action_index(1, 1)
ACCELERATE = action_index(2, 1)
DECELERATE = action_index(0, 1)


@dataclass(frozen=True)
class WorldConfig:
    width: float
    height: float
    obstacles: tuple[Obstacle, ...]
    goal: tuple[float, float]
    goal_tolerance: float
    start: Pose2D
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))

    @property
    def bounds(self) -> Bounds:
        return Bounds.from_size(self.width, self.height)

    def validate(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise InvalidWorld(f"world size must be positive, got {self.width}x{self.height}")
        if not self.goal_tolerance > 0:
            raise InvalidWorld("goal_tolerance must be positive")
        bounds = self.bounds
        for obs in self.obstacles:
            if not bounds.contains(obs.center_x, obs.center_y, margin=obs.radius):
                raise InvalidWorld(f"obstacle {obs} is not inside the world")
        if check_collision(self.start, VEHICLE_RADIUS, self.obstacles, bounds):
            raise InvalidWorld(f"start {self.start} is outside the world or inside an obstacle")
        gx, gy = self.goal
        if not bounds.contains(gx, gy):
            raise InvalidWorld(f"goal {self.goal} is outside the world")
        for obs in self.obstacles:
            if math.hypot(gx - obs.center_x, gy - obs.center_y) <= obs.radius:
                raise InvalidWorld(f"goal {self.goal} lies inside obstacle {obs}")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "obstacles": [
                {"center_x": o.center_x, "center_y": o.center_y, "radius": o.radius} for o in self.obstacles
            ],
            "goal": list(self.goal),
            "goal_tolerance": self.goal_tolerance,
            "start": {"x": self.start.x, "y": self.start.y, "heading": self.start.heading},
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        expected = {"width", "height", "obstacles", "goal", "goal_tolerance", "start", "rng_seed"}
        unknown = set(data) - expected
        if unknown:
            raise InvalidWorld(f"unknown world field(s): {sorted(unknown)}")
        return cls(
            width=float(data["width"]),
            height=float(data["height"]),
            obstacles=tuple(Obstacle(float(o["center_x"]), float(o["center_y"]), float(o["radius"])) for o in data["obstacles"]),
            goal=(float(data["goal"][0]), float(data["goal"][1])),
            goal_tolerance=float(data["goal_tolerance"]),
            start=Pose2D(float(data["start"]["x"]), float(data["start"]["y"]), float(data["start"]["heading"])),
            rng_seed=int(data.get("rng_seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "WorldConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_world(
    width: float,
    height: float,
    n_obstacles: int,
    seed: int,
    goal_tolerance: float = 0.5,
    layout: str = LAYOUT,
) -> WorldConfig:
    """Random world: start pose, goal and ``n_obstacles`` disc obstacles.

    ``layout="uniform"`` draws start and goal anywhere at least 1 m from the
    walls and ``MIN_GOAL_DISTANCE`` apart; ``"crossing"`` puts the start in the
    bottom band and the goal in the top band. The start heading points at the
    goal within +-45 degrees.

    Obstacles are rejection-sampled: discs stay inside the walls, keep a
    passable gap between each other and stay ``CLEARANCE`` away from start and
    goal. Start/goal draws and obstacle draws share one budget of
    ``PLACEMENT_ATTEMPTS`` rejections; exhausting it raises PlacementFailed.
    """
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be >= 0")
    if not (width > 0 and height > 0):
        raise ValueError("world size must be positive")
    if layout not in ("uniform", "crossing"):
        raise ValueError(f"layout must be 'uniform' or 'crossing', got {layout!r}")
    margin = 1.0
    if width <= 2 * margin or height <= 2 * margin:
        raise PlacementFailed(f"{width}x{height} leaves no room 1 m from the walls")
    rng = np.random.default_rng(seed)
    rejected = 0
    if layout == "crossing":
        band = max(0.2 * height, margin + 0.5)
        sx = rng.uniform(margin, width - margin)
        sy = rng.uniform(margin, min(band, height - margin))
        gx = rng.uniform(margin, width - margin)
        gy = rng.uniform(max(height - band, margin), height - margin)
    else:
        while True:
            sx, sy = rng.uniform(margin, width - margin), rng.uniform(margin, height - margin)
            gx, gy = rng.uniform(margin, width - margin), rng.uniform(margin, height - margin)
            if math.hypot(gx - sx, gy - sy) >= MIN_GOAL_DISTANCE:
                break
            rejected += 1
            if rejected >= PLACEMENT_ATTEMPTS:
                raise PlacementFailed(f"no start/goal pair {MIN_GOAL_DISTANCE} m apart fits in {width}x{height}")
    heading = math.atan2(gy - sy, gx - sx) + rng.uniform(-math.pi / 4, math.pi / 4)
    start = Pose2D(sx, sy, heading)

    lo, hi = RADIUS_RANGE
    placed: list[Obstacle] = []
    while len(placed) < n_obstacles:
        if rejected >= PLACEMENT_ATTEMPTS:
            raise PlacementFailed(
                f"placed {len(placed)} of {n_obstacles} obstacles in {width}x{height} "
                f"after {PLACEMENT_ATTEMPTS} rejected draws"
            )
        r = rng.uniform(lo, hi)
        cx = rng.uniform(r, width - r)
        cy = rng.uniform(r, height - r)
        ok = (
            math.hypot(cx - sx, cy - sy) - r >= CLEARANCE
            and math.hypot(cx - gx, cy - gy) - r >= CLEARANCE
            and all(math.hypot(cx - o.center_x, cy - o.center_y) - r - o.radius >= OBSTACLE_GAP for o in placed)
        )
        if ok:
            placed.append(Obstacle(cx, cy, r))
        else:
            rejected += 1
    return WorldConfig(width, height, tuple(placed), (gx, gy), goal_tolerance, start, seed)


def sample_goal(
    world: WorldConfig, rng: np.random.Generator, away_from: tuple[float, float], min_distance: float = MIN_GOAL_DISTANCE
) -> tuple[float, float]:
    """Uniform free-space goal at least ``min_distance`` from ``away_from``."""
    margin = min(1.0, 0.25 * world.width, 0.25 * world.height)
    for _ in range(PLACEMENT_ATTEMPTS):
        gx = rng.uniform(margin, world.width - margin)
        gy = rng.uniform(margin, world.height - margin)
        if math.hypot(gx - away_from[0], gy - away_from[1]) < min_distance:
            continue
        if all(math.hypot(gx - o.center_x, gy - o.center_y) - o.radius >= CLEARANCE for o in world.obstacles):
            return gx, gy
    raise PlacementFailed("no free goal position found")


@dataclass
class VehicleState:
    pose: Pose2D
    linear_speed: float = 0.0
    angular_rate: float = 0.0

    def __post_init__(self) -> None:
        self.linear_speed = min(max(float(self.linear_speed), 0.0), V_MAX)
        self.angular_rate = min(max(float(self.angular_rate), -OMEGA_MAX), OMEGA_MAX)


@dataclass(frozen=True)
class RewardInputs:
    collided: bool
    reached: bool
    speed: float
    deviation: Optional[float]


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward_inputs: RewardInputs
    done: bool
    done_reason: str  # "collision", "goal", "timeout" or "running"


class NavigationSim:
    """One episode of vehicle motion in a fixed world.

    Call :meth:`reset` before stepping. Not thread-safe; use one instance per
    episode runner.
    """

    def __init__(self, config: WorldConfig, max_steps: int = MAX_STEPS, dt: float = DT):
        config.validate()
        self.config = config
        self.max_steps = max_steps
        self.dt = dt
        self._bounds = config.bounds
        self._cx, self._cy, self._r = obstacle_arrays(config.obstacles)
        self._diagonal = math.hypot(config.width, config.height)
        self.state: VehicleState = VehicleState(config.start)
        self.steps = 0
        self.done = True
        self.done_reason = "running"

    def reset(self) -> np.ndarray:
        self.state = VehicleState(self.config.start, 0.0, 0.0)
        self.steps = 0
        self.done = False
        self.done_reason = "running"
        return self.observe()

    def observe(self) -> np.ndarray:
        st = self.state
        pose = st.pose
        rays = cast_rays(
            pose.x, pose.y, pose.heading + RAY_OFFSETS, self._cx, self._cy, self._r, self._bounds, MAX_RANGE
        )
        gx, gy = self.config.goal
        goal_distance = math.hypot(gx - pose.x, gy - pose.y)
        goal_bearing = wrap_angle(math.atan2(gy - pose.y, gx - pose.x) - pose.heading)
        obs = np.empty(OBSERVATION_SIZE)
        obs[:N_RAYS] = rays / MAX_RANGE
        obs[OBS_GOAL_DISTANCE] = min(goal_distance / self._diagonal, 1.0)
        obs[OBS_GOAL_BEARING] = goal_bearing / math.pi
        obs[OBS_SPEED] = st.linear_speed / V_MAX
        obs[OBS_ANGULAR_RATE] = st.angular_rate / OMEGA_MAX
        return obs

    def retarget(self, goal: tuple[float, float]) -> np.ndarray:
        """Move the goal and resume a goal-terminated episode; returns the new observation."""
        cfg = self.config
        self.config = WorldConfig(cfg.width, cfg.height, cfg.obstacles, goal, cfg.goal_tolerance, cfg.start, cfg.rng_seed)
        if self.done_reason == "goal":
            self.done = self.steps >= self.max_steps
            self.done_reason = "timeout" if self.done else "running"
        return self.observe()

    def goal_distance(self) -> float:
        gx, gy = self.config.goal
        return math.hypot(gx - self.state.pose.x, gy - self.state.pose.y)

    def step(self, action: int, dt: Optional[float] = None) -> StepOutcome:
        if self.done:
            raise SteppedAfterDone("episode is finished; call reset()")
        dt = self.dt if dt is None else dt
        if not dt > 0:
            raise ValueError("dt must be positive")
        dv, dw = action_deltas(int(action))
        st = self.state
        v = min(max(st.linear_speed + dv, 0.0), V_MAX)
        w = min(max(st.angular_rate + dw, -OMEGA_MAX), OMEGA_MAX)
        p = st.pose
        pose = Pose2D(p.x + v * math.cos(p.heading) * dt, p.y + v * math.sin(p.heading) * dt, p.heading + w * dt)
        self.state = VehicleState(pose, v, w)
        self.steps += 1

        collided = check_collision(pose, VEHICLE_RADIUS, self.config.obstacles, self._bounds)
        reached = not collided and self.goal_distance() <= self.config.goal_tolerance
        deviation = None if collided else min_deviation_in_range(pose, self.config.obstacles, SENSING_RADIUS)
        if collided:
            reason = "collision"
        elif reached:
            reason = "goal"
        elif self.steps >= self.max_steps:
            reason = "timeout"
        else:
            reason = "running"
        self.done = reason != "running"
        self.done_reason = reason
        return StepOutcome(self.observe(), RewardInputs(collided, reached, v, deviation), self.done, reason)
