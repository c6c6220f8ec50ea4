"""Command-line entry point: ``couplednav {train,compare,eval,export}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Everything a command writes lands under the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import harness
from .agent import Agent
from .config import ConfigError, ExperimentConfig, load_config
from .neuralnet import ShapeMismatch
from .simworld import N_ACTIONS, OBSERVATION_SIZE

log = logging.getLogger("couplednav")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _output_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.harness.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _curve(points) -> list[dict]:
    return [{"step": p.step, "success_rate": p.success_rate, "mean_speed": p.mean_speed} for p in points]


def _export_records(records, directory: Path, prefix: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(records):
        harness.export_episode(rec, directory / f"{prefix}ep{i:03d}")


def cmd_train(cfg: ExperimentConfig, env_name: Optional[str]) -> int:
    env = cfg.environment(env_name or cfg.harness.train_environment)
    out = _output_dir(cfg)
    result = harness.train(env, cfg.agent, cfg.reward_kind, cfg.harness.train_settings(), cfg.seed, cfg.reward)
    ckpt = out / "checkpoint.json"
    result.agent.save(ckpt)
    _write_json(out / "learning_curve.json", {
        "env": env.name,
        "reward_kind": cfg.reward_kind.value,
        "seed": cfg.seed,
        "selected_step": result.selected_step,
        "curve": _curve(result.curve),
    })
    _write_json(out / "config.json", cfg.to_dict())
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    out = _output_dir(cfg)
    episodes_dir = out / "episodes"
    done: list[harness.CellResult] = []

    def on_cell(cell, records, agent) -> None:
        tag = f"{cell.env}__{cell.reward_kind}__s{cell.seed}"
        _export_records(records, episodes_dir, tag + "__")
        (out / "checkpoints").mkdir(exist_ok=True)
        agent.save(out / "checkpoints" / f"{tag}.json")
        done.append(cell)

    _write_json(out / "config.json", cfg.to_dict())
    h = cfg.harness
    try:
        result = harness.compare_rewards(
            cfg.environments, cfg.agent, h.train_settings(), n_eval=h.n_eval, seed=cfg.seed,
            reward_kinds=cfg.compare_kinds, reward_config=cfg.reward, n_train_seeds=h.n_train_seeds,
            on_cell=on_cell, train_env=cfg.train_env(),
        )
    except (Exception, KeyboardInterrupt) as exc:
        partial = harness.ExperimentResult(cells=done, complete=False)
        _write_json(out / "results.json", partial.to_dict())
        print(f"error: comparison stopped after {len(done)} cell(s): {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_json(out / "results.json", result.to_dict())
    print(result.table())
    return EXIT_OK


def _load_checkpoint(path: Path) -> Agent:
    if not path.is_file():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        agent = Agent.load(path)
    except (ValueError, KeyError, OSError, ShapeMismatch) as exc:
        raise UsageError(f"cannot load checkpoint {path}: {exc}") from exc
    if agent.online.n_inputs != OBSERVATION_SIZE:
        raise UsageError(
            f"checkpoint expects {agent.online.n_inputs}-dimensional observations, "
            f"the simulator produces {OBSERVATION_SIZE}"
        )
    if agent.online.n_outputs != N_ACTIONS:
        raise UsageError(f"checkpoint has {agent.online.n_outputs} action outputs, the simulator has {N_ACTIONS}")
    return agent


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path, n_episodes: int, env_name: Optional[str]) -> int:
    if n_episodes < 1:
        raise UsageError(f"--episodes must be >= 1, got {n_episodes}")
    agent = _load_checkpoint(checkpoint)
    env = cfg.environment(env_name)
    out = _output_dir(cfg)
    records = harness.evaluate(agent, env, harness.evaluation_seeds(cfg.seed, n_episodes),
                               cfg.reward_kind, cfg.reward, record=True)
    summary = harness.EvalSummary.from_records(records)
    _export_records(records, out / "eval", f"{env.name}__")
    _write_json(out / "eval_summary.json", {
        "env": env.name,
        "checkpoint": str(checkpoint),
        **vars(summary),
        "episode_speeds": [r.average_speed for r in records],
        "episode_outcomes": [r.outcome for r in records],
    })
    print(f"{env.name}: success {summary.success_rate:.2f}  collision {summary.collision_rate:.2f}  "
          f"mean speed {summary.mean_speed:.3f} m/s  (n={summary.n})")
    return EXIT_OK


def cmd_export(cfg: ExperimentConfig, checkpoint: Path, world_seed: int, env_name: Optional[str]) -> int:
    agent = _load_checkpoint(checkpoint)
    env = cfg.environment(env_name)
    out = _output_dir(cfg) / "export"
    world = env.generate(world_seed)
    out.mkdir(parents=True, exist_ok=True)
    world.save(out / f"{env.name}__world{world_seed}.world.json")
    rec = harness.run_episode(world, agent, 0.0, np.random.default_rng(0), True, cfg.reward_kind, cfg.reward)
    csv_path, plot_path = harness.export_episode(rec, out / f"{env.name}__world{world_seed}")
    print(f"{rec.outcome} after {rec.n_steps} steps, mean speed {rec.average_speed:.3f} m/s")
    print(f"wrote {csv_path} and {plot_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="experiment YAML file")
    common.add_argument("--out", help="output directory (overrides harness.output_dir)")
    common.add_argument("--seed", type=int, help="overrides world.seed")
    common.add_argument("--algorithm", choices=("dqn", "ddqn"), help="overrides agent.algorithm")
    common.add_argument("-v", "--verbose", action="store_true", help="log training progress")

    parser = argparse.ArgumentParser(prog="couplednav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one agent and save a checkpoint")
    p.add_argument("--env", help="environment name from the config (default: first)")

    sub.add_parser("compare", parents=[common], help="train and evaluate every (environment, reward) cell")

    p = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--episodes", type=int, help="default: harness.n_eval")
    p.add_argument("--env")

    p = sub.add_parser("export", parents=[common], help="export one greedy episode for plotting")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--world-seed", type=int, default=0)
    p.add_argument("--env")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.algorithm, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.env)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "eval":
            episodes = cfg.harness.n_eval if args.episodes is None else args.episodes
            return cmd_eval(cfg, args.checkpoint, episodes, args.env)
        return cmd_export(cfg, args.checkpoint, args.world_seed, args.env)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
