"""Plain and speed-coupled step rewards."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional


class ContradictoryOutcome(ValueError):
    """A step cannot both collide and reach the goal."""


class RewardKind(str, enum.Enum):
    PLAIN = "plain"
    COUPLED = "coupled"


@dataclass(frozen=True)
class RewardConfig:
    expected_speed: float = 1.2
    angle_threshold: float = math.radians(30.0)
    far_coefficient: float = 20.0
    near_coefficient: float = 10.0
    hit_penalty: float = -100.0
    neutral_reward: float = 10.0
    reach_bonus: float = 100.0
    no_collision_reward: float = 10.0

    def __post_init__(self) -> None:
        if not self.expected_speed > 0:
            raise ValueError(f"expected_speed must be positive, got {self.expected_speed}")
        if not 0 < self.angle_threshold < math.pi:
            raise ValueError(f"angle_threshold must lie in (0, pi) rad, got {self.angle_threshold}")

    @classmethod
    def with_threshold_degrees(cls, degrees: float, **kwargs) -> "RewardConfig":
        return cls(angle_threshold=math.radians(degrees), **kwargs)


def speed_gaussian(speed: float, expected_speed: float) -> float:
    """Unit-width Gaussian bump peaking at the expected speed."""
    return math.exp(-((speed - expected_speed) ** 2) / 2.0)


def plain_reward(collided: bool, reached: bool, cfg: RewardConfig = RewardConfig()) -> float:
    if collided and reached:
        raise ContradictoryOutcome("collided and reached are mutually exclusive")
    if collided:
        return cfg.hit_penalty
    if reached:
        return cfg.reach_bonus
    return cfg.no_collision_reward


def coupled_reward(
    collided: bool,
    speed: float,
    deviation: Optional[float],
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Reward coupling speed to the heading/obstacle angle.

    ``deviation`` is None when no obstacle is within sensing range, which selects
    the neutral branch.
    """
    if speed < 0:
        raise ValueError(f"speed must be non-negative, got {speed}")
    if collided:
        return cfg.hit_penalty
    if deviation is None:
        return cfg.neutral_reward
    coefficient = cfg.far_coefficient if deviation > cfg.angle_threshold else cfg.near_coefficient
    return coefficient * (1.0 + speed_gaussian(speed, cfg.expected_speed))


def reach_bonus(reached: bool, cfg: RewardConfig = RewardConfig()) -> float:
    return cfg.reach_bonus if reached else 0.0


def step_reward(
    kind: RewardKind,
    collided: bool,
    reached: bool,
    speed: float,
    deviation: Optional[float],
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Full per-step reward for either scheme.

    The plain scheme already contains the reach case; the coupled scheme gets the
    reach bonus added on top of its step value.
    """
    kind = RewardKind(kind)
    if kind is RewardKind.PLAIN:
        return plain_reward(collided, reached, cfg)
    if collided and reached:
        raise ContradictoryOutcome("collided and reached are mutually exclusive")
    return coupled_reward(collided, speed, deviation, cfg) + reach_bonus(reached, cfg)
