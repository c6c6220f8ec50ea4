"""Experiment configuration file (YAML) and its validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .agent import AgentConfig
from .harness import CorridorSpec, EnvSpec, TrainSettings
from .reward import RewardConfig, RewardKind


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class HarnessConfig:
    training_budget: int = 150_000
    warmup_steps: int = 1_000
    eval_interval: int = 10_000
    eval_episodes: int = 20
    n_eval: int = 20
    n_train_seeds: int = 1
    reward_scale: float = 0.01
    goal_mode: str = "absorbing"
    keep_best: bool = True
    # train every reward kind in this environment and evaluate in all of them;
    # None trains a separate agent per environment
    train_environment: Optional[str] = "10x15"
    output_dir: str = "runs/default"

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            budget=self.training_budget,
            warmup=self.warmup_steps,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
            reward_scale=self.reward_scale,
            goal_mode=self.goal_mode,
            keep_best=self.keep_best,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    environments: tuple[EnvSpec | CorridorSpec, ...]
    agent: AgentConfig
    reward: RewardConfig
    reward_kind: RewardKind
    compare_kinds: tuple[RewardKind, ...]
    harness: HarnessConfig

    def environment(self, name: Optional[str] = None) -> EnvSpec | CorridorSpec:
        if name is None:
            return self.environments[0]
        for env in self.environments:
            if env.name == name:
                return env
        raise ConfigError(f"world.environments: no environment named {name!r}")

    def train_env(self) -> Optional[EnvSpec | CorridorSpec]:
        name = self.harness.train_environment
        return None if name is None else self.environment(name)

    def with_overrides(self, seed: Optional[int] = None, algorithm: Optional[str] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if algorithm is not None:
            cfg = replace(cfg, agent=replace(cfg.agent, algorithm=algorithm))
        if output_dir is not None:
            cfg = replace(cfg, harness=replace(cfg.harness, output_dir=output_dir))
        return cfg

    def to_dict(self) -> dict:
        envs = []
        for e in self.environments:
            d = {"type": "corridor" if isinstance(e, CorridorSpec) else "random"}
            d.update({f.name: getattr(e, f.name) for f in fields(e)})
            envs.append(d)
        reward = {f.name: getattr(self.reward, f.name) for f in fields(self.reward) if f.name != "angle_threshold"}
        reward["angle_threshold_deg"] = math.degrees(self.reward.angle_threshold)
        reward["kind"] = self.reward_kind.value
        reward["compare_kinds"] = [k.value for k in self.compare_kinds]
        return {
            "world": {"seed": self.seed, "environments": envs},
            "agent": self.agent.to_dict(),
            "reward": reward,
            "harness": {f.name: getattr(self.harness, f.name) for f in fields(self.harness)},
        }


def _section(data: Any, name: str, allowed: set[str]) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(f'{name}.{k}' for k in unknown)}")
    return data


def _build(cls, section: str, values: dict):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        # dataclass validators name the field in their message
        raise ConfigError(f"{section}: {exc}") from exc


def _environment(raw: Any, index: int):
    where = f"world.environments[{index}]"
    kind = raw.get("type", "random") if isinstance(raw, dict) else None
    if kind == "corridor":
        d = _section(raw, where, {"type"} | {f.name for f in fields(CorridorSpec)})
        d = {k: v for k, v in d.items() if k != "type"}
        return _build(CorridorSpec, where, d)
    if kind != "random":
        raise ConfigError(f"{where}.type: expected 'random' or 'corridor', got {kind!r}")
    d = _section(raw, where, {"type"} | {f.name for f in fields(EnvSpec)})
    d = {k: v for k, v in d.items() if k != "type"}
    for key in ("width", "height"):
        if key in d and not float(d[key]) > 0:
            raise ConfigError(f"{where}.{key}: must be positive")
    if int(d.get("n_obstacles", 0)) < 0:
        raise ConfigError(f"{where}.n_obstacles: must be >= 0")
    return _build(EnvSpec, where, d)


def parse_config(data: Any) -> ExperimentConfig:
    top = _section(data, "config", {"world", "agent", "reward", "harness"})

    world = _section(top.get("world"), "world", {"seed", "environments"})
    raw_envs = world.get("environments") or [
        {"name": "10x15", "width": 10.0, "height": 15.0, "n_obstacles": 10},
        {"name": "25x25", "width": 25.0, "height": 25.0, "n_obstacles": 16},
    ]
    if not isinstance(raw_envs, list) or not raw_envs:
        raise ConfigError("world.environments: expected a non-empty list")
    envs = tuple(_environment(e, i) for i, e in enumerate(raw_envs))
    names = [e.name for e in envs]
    if len(set(names)) != len(names):
        raise ConfigError("world.environments: names must be unique")

    agent_raw = dict(_section(top.get("agent"), "agent", {f.name for f in fields(AgentConfig)}))
    if "algorithm" in agent_raw and str(agent_raw["algorithm"]).lower() not in ("dqn", "ddqn"):
        raise ConfigError(f"agent.algorithm: expected 'dqn' or 'ddqn', got {agent_raw['algorithm']!r}")
    agent = _build(AgentConfig, "agent", agent_raw)

    reward_keys = {f.name for f in fields(RewardConfig)} - {"angle_threshold"}
    reward_raw = dict(_section(top.get("reward"), "reward", reward_keys | {"angle_threshold_deg", "kind", "compare_kinds"}))
    try:
        kind = RewardKind(reward_raw.pop("kind", "coupled"))
        compare_kinds = tuple(RewardKind(k) for k in reward_raw.pop("compare_kinds", ["plain", "coupled"]))
    except ValueError as exc:
        raise ConfigError(f"reward.kind: {exc}") from exc
    if not compare_kinds:
        raise ConfigError("reward.compare_kinds: must not be empty")
    degrees = reward_raw.pop("angle_threshold_deg", 30.0)
    if not 0 < float(degrees) < 180:
        raise ConfigError(f"reward.angle_threshold_deg: must lie in (0, 180), got {degrees}")
    reward = _build(RewardConfig, "reward", {"angle_threshold": math.radians(float(degrees)), **reward_raw})

    harness = _build(HarnessConfig, "harness", _section(top.get("harness"), "harness", {f.name for f in fields(HarnessConfig)}))
    h = harness
    if h.training_budget < h.warmup_steps:
        raise ConfigError("harness.training_budget: must be at least harness.warmup_steps")
    if h.warmup_steps < agent.batch_size:
        raise ConfigError("harness.warmup_steps: must be at least agent.batch_size")
    if h.n_eval < 1:
        raise ConfigError("harness.n_eval: must be >= 1")
    if h.n_train_seeds < 1:
        raise ConfigError("harness.n_train_seeds: must be >= 1")
    if h.eval_interval < 0 or h.eval_episodes < 1:
        raise ConfigError("harness.eval_interval/eval_episodes: invalid checkpoint evaluation settings")
    if not h.reward_scale > 0:
        raise ConfigError("harness.reward_scale: must be positive")
    if h.goal_mode not in GOAL_MODES:
        raise ConfigError(f"harness.goal_mode: expected one of {sorted(GOAL_MODES)}, got {h.goal_mode!r}")

    if h.train_environment is not None and h.train_environment not in names:
        raise ConfigError(f"harness.train_environment: {h.train_environment!r} is not one of {names}")

    seed = world.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("world.seed: expected an integer")
    return ExperimentConfig(seed, envs, agent, reward, kind, compare_kinds, harness)


GOAL_MODES = {"bootstrap", "terminal", "respawn", "absorbing"}


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_config(data or {})
