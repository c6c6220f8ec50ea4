"""Episode runner, training loop, reward comparison and trajectory export."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .agent import Agent, AgentConfig, ReplayBuffer
from .neuralnet import MlpParams
from .reward import RewardConfig, RewardKind, step_reward
from .geometry import Pose2D
from .simworld import MAX_STEPS, V_MAX, NavigationSim, WorldConfig, generate_world, sample_goal

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "x", "y", "heading", "speed", "reward")


class Policy(Protocol):
    def select_action(self, observation: np.ndarray, epsilon: float, rng: np.random.Generator) -> int: ...


@dataclass(frozen=True)
class EnvSpec:
    """A family of random worlds of one size and obstacle count."""

    name: str
    width: float
    height: float
    n_obstacles: int
    goal_tolerance: float = 0.5

    def generate(self, seed: int) -> WorldConfig:
        return generate_world(self.width, self.height, self.n_obstacles, seed, self.goal_tolerance)


@dataclass(frozen=True)
class CorridorSpec:
    """Obstacle-free corridor with the goal straight ahead of the start.

    Each seed jitters the start position and heading slightly.
    """

    name: str = "corridor"
    width: float = 4.0
    length: float = 10.0
    goal_distance: float = 6.0
    goal_tolerance: float = 0.5

    def generate(self, seed: int) -> WorldConfig:
        rng = np.random.default_rng(seed)
        x = 0.5 * self.width + rng.uniform(-0.3, 0.3)
        heading = 0.5 * math.pi + rng.uniform(-0.2, 0.2)
        return WorldConfig(
            self.width, self.length, (), (x, 1.0 + self.goal_distance), self.goal_tolerance,
            Pose2D(x, 1.0, heading), seed,
        )


SMALL_ENV = EnvSpec("10x15", 10.0, 15.0, 10)
LARGE_ENV = EnvSpec("25x25", 25.0, 25.0, 16)


@dataclass(frozen=True)
class StepLog:
    t: float
    x: float
    y: float
    heading: float
    speed: float
    action: int
    reward: float


@dataclass
class EpisodeRecord:
    outcome: str
    n_steps: int
    average_speed: float
    path_length: float
    total_reward: float
    steps: list[StepLog] = field(default_factory=list)
    world_seed: Optional[int] = None

    @property
    def distance_speed(self) -> float:
        """Path length over elapsed time; the alternative speed metric."""
        return self.path_length / (self.n_steps * 0.1) if self.n_steps else 0.0


def run_episode(
    world: WorldConfig,
    policy: Policy,
    epsilon: float,
    rng: np.random.Generator,
    record: bool = False,
    reward_kind: RewardKind = RewardKind.COUPLED,
    reward_config: RewardConfig = RewardConfig(),
    max_steps: int = MAX_STEPS,
) -> EpisodeRecord:
    """Roll ``policy`` in ``world`` until the episode ends.

    Average speed is the mean of the per-step linear speeds.
    """
    sim = NavigationSim(world, max_steps=max_steps)
    obs = sim.reset()
    logs: list[StepLog] = []
    speed_sum = 0.0
    path = 0.0
    total = 0.0
    while True:
        action = policy.select_action(obs, epsilon, rng)
        out = sim.step(action)
        ri = out.reward_inputs
        r = step_reward(reward_kind, ri.collided, ri.reached, ri.speed, ri.deviation, reward_config)
        speed_sum += ri.speed
        path += ri.speed * sim.dt
        total += r
        if record:
            p = sim.state.pose
            logs.append(StepLog(sim.steps * sim.dt, p.x, p.y, p.heading, ri.speed, action, r))
        obs = out.observation
        if out.done:
            break
    return EpisodeRecord(
        outcome=out.done_reason,
        n_steps=sim.steps,
        average_speed=speed_sum / sim.steps,
        path_length=path,
        total_reward=total,
        steps=logs,
        world_seed=world.rng_seed,
    )


@dataclass(frozen=True)
class EvalSummary:
    success_rate: float
    collision_rate: float
    timeout_rate: float
    mean_speed: float
    mean_distance_speed: float
    n: int

    @classmethod
    def from_records(cls, records: Sequence[EpisodeRecord]) -> "EvalSummary":
        n = len(records)
        if n == 0:
            raise ValueError("need at least one episode")
        outcomes = [r.outcome for r in records]
        return cls(
            success_rate=outcomes.count("goal") / n,
            collision_rate=outcomes.count("collision") / n,
            timeout_rate=outcomes.count("timeout") / n,
            mean_speed=float(np.mean([r.average_speed for r in records])),
            mean_distance_speed=float(np.mean([r.distance_speed for r in records])),
            n=n,
        )


def evaluation_seeds(seed: int, n: int) -> list[int]:
    """World seeds for greedy evaluation; disjoint from training world seeds."""
    return [int(s) for s in np.random.default_rng([seed, 0xE7A1]).integers(0, 2**31 - 1, size=n)]


def validation_seeds(seed: int, n: int) -> list[int]:
    """World seeds for checkpoint selection during training, a stream separate from evaluation."""
    return [int(s) for s in np.random.default_rng([seed, 0x5E1EC7]).integers(0, 2**31 - 1, size=n)]


def evaluate(
    agent: Policy,
    env: EnvSpec,
    world_seeds: Sequence[int],
    reward_kind: RewardKind = RewardKind.COUPLED,
    reward_config: RewardConfig = RewardConfig(),
    record: bool = False,
) -> list[EpisodeRecord]:
    """Greedy (epsilon = 0) episodes, one per world seed."""
    rng = np.random.default_rng(0)
    return [
        run_episode(env.generate(s), agent, 0.0, rng, record, reward_kind, reward_config) for s in world_seeds
    ]


@dataclass(frozen=True)
class TrainSettings:
    budget: int = 150_000
    warmup: int = 1_000
    eval_interval: int = 10_000
    eval_episodes: int = 20
    train_frequency: int = 1
    goal_mode: str = "absorbing"
    reward_scale: float = 0.01
    keep_best: bool = True


@dataclass(frozen=True)
class CurvePoint:
    step: int
    success_rate: float
    mean_speed: float


@dataclass
class TrainResult:
    agent: Agent
    curve: list[CurvePoint]
    losses: list[float]
    episodes: int
    selected_step: int = 0


def train(
    env: EnvSpec | CorridorSpec | Callable[[int], WorldConfig],
    agent_config: AgentConfig,
    reward_kind: RewardKind,
    settings: TrainSettings = TrainSettings(),
    seed: int = 0,
    reward_config: RewardConfig = RewardConfig(),
    progress: Optional[Callable[[CurvePoint], None]] = None,
) -> TrainResult:
    """Train one agent for ``settings.budget`` environment steps.

    The first ``warmup`` steps act uniformly at random and only fill the buffer;
    afterwards one gradient step follows every ``train_frequency`` env steps.
    Each episode runs in a fresh world drawn from ``env``.

    ``goal_mode`` decides what a goal transition stores:
      bootstrap  not terminal, bootstraps from the final observation
      terminal   terminal, reward as is
      absorbing  terminal, plus the discounted value of staying at the best
                 per-step reward forever (the goal stops being worse than
                 never arriving)
      respawn    a new goal is sampled and the episode continues
    Timeouts always bootstrap. Every ``eval_interval`` steps the greedy policy
    is scored on validation worlds; with ``keep_best`` the returned agent holds
    the parameters of the best checkpoint (success rate, then mean speed;
    ties keep the earlier one), counting the final parameters as a checkpoint.
    """
    if settings.budget < settings.warmup:
        raise ValueError(f"budget ({settings.budget}) must be at least warmup ({settings.warmup})")
    if settings.warmup < agent_config.batch_size:
        raise ValueError("warmup must provide at least one batch of transitions")
    make_world = env.generate if hasattr(env, "generate") else env
    seeds = np.random.SeedSequence(seed).spawn(4)
    init_seed = int(seeds[0].generate_state(1)[0])
    policy_rng = np.random.default_rng(seeds[1])
    sample_rng = np.random.default_rng(seeds[2])
    world_rng = np.random.default_rng(seeds[3])
    eval_seeds = validation_seeds(seed, settings.eval_episodes) if hasattr(env, "generate") else []

    agent = Agent.create(agent_config, init_seed)
    best_step = reward_config.far_coefficient * 2.0 if RewardKind(reward_kind) is RewardKind.COUPLED else reward_config.no_collision_reward
    buffer = ReplayBuffer(agent_config.buffer_capacity)
    curve: list[CurvePoint] = []
    losses: list[float] = []
    episodes = 0
    sim: Optional[NavigationSim] = None
    obs = None
    best: Optional[tuple[tuple[float, float], int, MlpParams]] = None

    def checkpoint(step: int) -> None:
        nonlocal best
        summary = EvalSummary.from_records(evaluate(agent, env, eval_seeds, reward_kind, reward_config))
        point = CurvePoint(step, summary.success_rate, summary.mean_speed)
        curve.append(point)
        log.info("step %d: success %.2f speed %.3f", point.step, point.success_rate, point.mean_speed)
        if progress is not None:
            progress(point)
        score = (summary.success_rate, summary.mean_speed)
        if best is None or score > best[0]:
            best = (score, step, agent.online.copy())

    for step in range(settings.budget):
        if sim is None or sim.done:
            sim = NavigationSim(make_world(int(world_rng.integers(0, 2**31 - 1))))
            obs = sim.reset()
            episodes += 1
        epsilon = 1.0 if step < settings.warmup else agent_config.epsilon_at(step - settings.warmup)
        action = agent.select_action(obs, epsilon, policy_rng)
        out = sim.step(action)
        ri = out.reward_inputs
        r = step_reward(reward_kind, ri.collided, ri.reached, ri.speed, ri.deviation, reward_config)
        next_obs = out.observation
        terminal = ri.collided
        stored = r
        if ri.reached:
            mode = settings.goal_mode
            if mode == "terminal":
                terminal = True
            elif mode == "absorbing":
                terminal = True
                stored = r + agent_config.gamma * best_step / (1.0 - agent_config.gamma)
            elif mode == "respawn":
                p = sim.state.pose
                next_obs = sim.retarget(sample_goal(sim.config, world_rng, (p.x, p.y)))
        buffer.add(obs, action, stored * settings.reward_scale, next_obs, terminal)
        obs = next_obs
        agent.env_steps += 1

        if step + 1 > settings.warmup and (step + 1) % settings.train_frequency == 0:
            losses.append(agent.train_step(buffer, sample_rng))

        if eval_seeds and settings.eval_interval and (step + 1) % settings.eval_interval == 0:
            checkpoint(step + 1)

    selected = settings.budget
    if settings.keep_best and eval_seeds:
        if not curve or curve[-1].step != settings.budget:
            checkpoint(settings.budget)
        selected = best[1]
        if selected != settings.budget:
            agent.online.copy_from(best[2])
            agent.sync_target()
            log.info("keeping checkpoint from step %d", selected)
    return TrainResult(agent, curve, losses, episodes, selected)


@dataclass
class CellResult:
    env: str
    reward_kind: str
    seed: int
    summary: EvalSummary
    episode_speeds: list[float]
    episode_outcomes: list[str]
    curve: list[CurvePoint]

    def to_dict(self) -> dict:
        s = self.summary
        return {
            "env": self.env,
            "reward_kind": self.reward_kind,
            "seed": self.seed,
            "n": s.n,
            "mean_speed": s.mean_speed,
            "mean_distance_speed": s.mean_distance_speed,
            "success_rate": s.success_rate,
            "collision_rate": s.collision_rate,
            "timeout_rate": s.timeout_rate,
            "episode_speeds": self.episode_speeds,
            "episode_outcomes": self.episode_outcomes,
            "learning_curve": [vars(p) for p in self.curve],
        }


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    complete: bool = True
    records: dict[tuple[str, str, int], list[EpisodeRecord]] = field(default_factory=dict, repr=False)

    def cell(self, env: str, reward_kind: str | RewardKind) -> CellResult:
        """Cell for (env, reward kind); with several training seeds, the first."""
        kind = RewardKind(reward_kind).value
        for c in self.cells:
            if c.env == env and c.reward_kind == kind:
                return c
        raise KeyError((env, kind))

    def mean_speed(self, env: str, reward_kind: str | RewardKind) -> float:
        kind = RewardKind(reward_kind).value
        values = [c.summary.mean_speed for c in self.cells if c.env == env and c.reward_kind == kind]
        if not values:
            raise KeyError((env, kind))
        return float(np.mean(values))

    def to_dict(self) -> dict:
        return {"complete": self.complete, "cells": [c.to_dict() for c in self.cells]}

    def table(self) -> str:
        envs = list(dict.fromkeys(c.env for c in self.cells))
        kinds = list(dict.fromkeys(c.reward_kind for c in self.cells))
        width = max(12, *(len(e) + 2 for e in envs))
        lines = ["reward".ljust(10) + "".join(e.rjust(width) for e in envs)]
        for k in kinds:
            row = k.ljust(10)
            for e in envs:
                try:
                    row += f"{self.mean_speed(e, k):.2f} m/s".rjust(width)
                except KeyError:
                    row += "-".rjust(width)
            lines.append(row)
        return "\n".join(lines)


def evaluate_cell(
    env: EnvSpec,
    reward_kind: RewardKind,
    agent: Agent,
    seed: int,
    n_eval: int,
    reward_config: RewardConfig = RewardConfig(),
    eval_seed: int = 0,
    curve: Sequence[CurvePoint] = (),
) -> tuple[CellResult, list[EpisodeRecord]]:
    records = evaluate(agent, env, evaluation_seeds(eval_seed, n_eval), reward_kind, reward_config, record=True)
    cell = CellResult(
        env=env.name,
        reward_kind=RewardKind(reward_kind).value,
        seed=seed,
        summary=EvalSummary.from_records(records),
        episode_speeds=[r.average_speed for r in records],
        episode_outcomes=[r.outcome for r in records],
        curve=list(curve),
    )
    return cell, records


def run_cell(
    env: EnvSpec,
    reward_kind: RewardKind,
    agent_config: AgentConfig,
    settings: TrainSettings,
    seed: int,
    n_eval: int,
    reward_config: RewardConfig = RewardConfig(),
    eval_seed: int = 0,
) -> tuple[CellResult, list[EpisodeRecord], Agent]:
    """Train in ``env`` and evaluate there."""
    result = train(env, agent_config, reward_kind, settings, seed, reward_config)
    cell, records = evaluate_cell(env, reward_kind, result.agent, seed, n_eval, reward_config, eval_seed, result.curve)
    return cell, records, result.agent


def compare_rewards(
    envs: Sequence[EnvSpec],
    agent_config: AgentConfig,
    settings: TrainSettings = TrainSettings(),
    n_eval: int = 20,
    seed: int = 0,
    reward_kinds: Sequence[RewardKind] = (RewardKind.PLAIN, RewardKind.COUPLED),
    reward_config: RewardConfig = RewardConfig(),
    n_train_seeds: int = 1,
    on_cell: Optional[Callable[[CellResult, list[EpisodeRecord], Agent], None]] = None,
    train_env: Optional[EnvSpec] = None,
) -> ExperimentResult:
    """Evaluate one trained agent per (environment, reward kind, training seed).

    Without ``train_env`` every environment trains its own agents. With it,
    each (reward kind, training seed) agent is trained once in ``train_env``
    and evaluated in every environment. Cells with the same environment share
    evaluation worlds so the reward kinds are compared on identical layouts.
    Cells run sequentially.
    """
    if not envs:
        raise ValueError("need at least one environment")
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    result = ExperimentResult(cells=[])

    def add(cell: CellResult, records: list[EpisodeRecord], agent: Agent) -> None:
        result.cells.append(cell)
        result.records[(cell.env, cell.reward_kind, cell.seed)] = records
        log.info("%s / %s: speed %.3f success %.2f", cell.env, cell.reward_kind,
                 cell.summary.mean_speed, cell.summary.success_rate)
        if on_cell is not None:
            on_cell(cell, records, agent)

    if train_env is None:
        for e_idx, env in enumerate(envs):
            for kind in reward_kinds:
                for k in range(n_train_seeds):
                    cell_seed = seed + 1000 * k + 100 * e_idx
                    add(*run_cell(env, RewardKind(kind), agent_config, settings, cell_seed, n_eval, reward_config,
                                  eval_seed=seed + 100 * e_idx))
        return result

    for kind in reward_kinds:
        for k in range(n_train_seeds):
            cell_seed = seed + 1000 * k
            trained = train(train_env, agent_config, RewardKind(kind), settings, cell_seed, reward_config)
            for e_idx, env in enumerate(envs):
                cell, records = evaluate_cell(env, RewardKind(kind), trained.agent, cell_seed, n_eval, reward_config,
                                              seed + 100 * e_idx, trained.curve)
                add(cell, records, trained.agent)
    return result


def export_episode(record: EpisodeRecord, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (t,x,y,heading,speed,reward) and ``<path>.plot.json``.

    Floats are written with ``repr`` so the CSV round-trips exactly.
    """
    if not record.steps:
        raise ValueError("episode record has no per-step log (run with record=True)")
    base = Path(path)
    csv_path = base.with_name(base.name + ".csv")
    plot_path = base.with_name(base.name + ".plot.json")
    try:
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for s in record.steps:
                writer.writerow([repr(float(v)) for v in (s.t, s.x, s.y, s.heading, s.speed, s.reward)])
        plot = {
            "outcome": record.outcome,
            "average_speed": record.average_speed,
            "distance_speed": record.distance_speed,
            "speed_vs_time": {"t": [s.t for s in record.steps], "speed": [s.speed for s in record.steps]},
            "trajectory": [[s.x, s.y] for s in record.steps],
        }
        plot_path.write_text(json.dumps(plot))
    except OSError as exc:
        raise OSError(f"failed to export episode to {base}: {exc}") from exc
    return csv_path, plot_path


def read_trajectory_csv(path: str | Path) -> dict[str, list[float]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[float]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(float(v))
    return cols
