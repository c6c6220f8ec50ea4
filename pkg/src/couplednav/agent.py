"""DQN / Double-DQN learner on top of :mod:`couplednav.neuralnet`."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import neuralnet as nn
from .simworld import N_ACTIONS, OBSERVATION_SIZE


class BufferTooSmall(RuntimeError):
    pass


class Algorithm(str, enum.Enum):
    DQN = "dqn"
    DDQN = "ddqn"


OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: Algorithm = Algorithm.DDQN
    gamma: float = 0.99
    learning_rate: float = 2.5e-4
    momentum: float = 0.9
    batch_size: int = 64
    target_sync_interval: int = 1000
    buffer_capacity: int = 50_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 20_000
    hidden_sizes: tuple[int, ...] = (64, 64)
    max_grad_norm: Optional[float] = None
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.target_sync_interval < 1:
            raise ValueError(f"target_sync_interval must be >= 1, got {self.target_sync_interval}")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be at least batch_size")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("epsilon schedule must satisfy 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay_steps < 0:
            raise ValueError("epsilon_decay_steps must be >= 0")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError("max_grad_norm must be positive when set")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (OBSERVATION_SIZE, *self.hidden_sizes, N_ACTIONS)

    def epsilon_at(self, env_step: int) -> float:
        """Linear decay from epsilon_start to epsilon_end, then constant."""
        if self.epsilon_decay_steps == 0 or env_step >= self.epsilon_decay_steps:
            return self.epsilon_end
        frac = env_step / self.epsilon_decay_steps
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, obs_size: int = OBSERVATION_SIZE):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_size))
        self.next_states = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action: int, reward: float, next_state, terminal: bool) -> None:
        if not np.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward}")
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, t: Transition) -> None:
        self.add(t.state, t.action, t.reward, t.next_state, t.terminal)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise BufferTooSmall("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch_size)


def greedy_action(q_values: np.ndarray) -> int:
    """Argmax with lowest-index tie-breaking."""
    return int(np.argmax(q_values))


def dqn_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminals: np.ndarray,
    target_params: nn.MlpParams,
    gamma: float,
) -> np.ndarray:
    """Batch of ``r + gamma * max_a Q_target(s', a)``; terminals keep ``r``."""
    next_q = nn.forward(target_params, np.atleast_2d(next_states))
    bootstrap = next_q.max(axis=1)
    return np.where(terminals, rewards, rewards + gamma * bootstrap)


def ddqn_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminals: np.ndarray,
    online_params: nn.MlpParams,
    target_params: nn.MlpParams,
    gamma: float,
) -> np.ndarray:
    """Online net picks the next action, target net scores it."""
    next_states = np.atleast_2d(next_states)
    chosen = np.argmax(nn.forward(online_params, next_states), axis=1)
    next_q = nn.forward(target_params, next_states)
    bootstrap = next_q[np.arange(len(chosen)), chosen]
    return np.where(terminals, rewards, rewards + gamma * bootstrap)


def dqn_target(t: Transition, target_params: nn.MlpParams, gamma: float) -> float:
    if t.terminal:
        return float(t.reward)
    return float(dqn_targets(np.array([t.reward]), t.next_state, np.array([False]), target_params, gamma)[0])


def ddqn_target(t: Transition, online_params: nn.MlpParams, target_params: nn.MlpParams, gamma: float) -> float:
    if t.terminal:
        return float(t.reward)
    return float(
        ddqn_targets(np.array([t.reward]), t.next_state, np.array([False]), online_params, target_params, gamma)[0]
    )


def td_loss_and_grads(
    params: nn.MlpParams,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, nn.Gradients]:
    """Mean squared TD error and its gradient; targets are treated as constants."""
    q, cache = nn.forward_cached(params, states)
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    loss = float(np.mean(err * err))
    upstream = np.zeros_like(q)
    upstream[rows, actions] = 2.0 * err / len(actions)
    return loss, nn.backward(params, states, upstream, cache)


@dataclass
class Agent:
    """Online/target parameter pair plus optimizer state and counters."""

    config: AgentConfig
    online: nn.MlpParams
    target: nn.MlpParams
    velocity: nn.MlpParams
    gradient_steps: int = 0
    env_steps: int = 0
    # second-moment estimate, only used by Adam
    second_moment: Optional[nn.MlpParams] = None

    @classmethod
    def create(cls, config: AgentConfig, seed: int) -> "Agent":
        online = nn.init_params(seed, config.layer_sizes)
        return cls(config, online, online.copy(), online.zeros_like())

    def q_values(self, observation: np.ndarray) -> np.ndarray:
        return nn.forward(self.online, observation)

    def select_action(self, observation: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        # The uniform draw happens every call so the rng stream does not depend on epsilon.
        explore = rng.random() < epsilon
        if explore:
            return int(rng.integers(self.online.n_outputs))
        return greedy_action(self.q_values(observation))

    def compute_targets(self, rewards, next_states, terminals) -> np.ndarray:
        gamma = self.config.gamma
        if self.config.algorithm is Algorithm.DDQN:
            return ddqn_targets(rewards, next_states, terminals, self.online, self.target, gamma)
        return dqn_targets(rewards, next_states, terminals, self.target, gamma)

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def train_on_batch(self, states, actions, rewards, next_states, terminals) -> float:
        targets = self.compute_targets(rewards, next_states, terminals)
        loss, grads = td_loss_and_grads(self.online, states, actions, targets)
        if self.config.max_grad_norm is not None:
            norm = nn.grad_norm(grads)
            if norm > self.config.max_grad_norm:
                scale = self.config.max_grad_norm / norm
                for g in grads.arrays():
                    g *= scale
        self.gradient_steps += 1
        if self.config.optimizer == "adam":
            if self.second_moment is None:
                self.second_moment = self.online.zeros_like()
            nn.adam_step(self.online, grads, self.config.learning_rate, self.velocity, self.second_moment,
                         self.gradient_steps, betas=(self.config.momentum, 0.999))
        else:
            nn.sgd_step(self.online, grads, self.config.learning_rate, self.velocity, self.config.momentum)
        if self.gradient_steps % self.config.target_sync_interval == 0:
            self.sync_target()
        return loss

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        if len(buffer) < self.config.batch_size:
            raise BufferTooSmall(f"buffer holds {len(buffer)} transitions, batch needs {self.config.batch_size}")
        idx = buffer.sample_indices(self.config.batch_size, rng)
        return self.train_on_batch(
            buffer.states[idx],
            buffer.actions[idx],
            buffer.rewards[idx],
            buffer.next_states[idx],
            buffer.terminals[idx],
        )

    def save(self, path: str | Path) -> None:
        """Write ``path`` (online network) plus a ``.json`` sidecar of counters and config."""
        path = Path(path)
        nn.save_params(self.online, path)
        sidecar = {
            "config": self.config.to_dict(),
            "gradient_steps": self.gradient_steps,
            "env_steps": self.env_steps,
        }
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Agent":
        path = Path(path)
        online = nn.load_params(path)
        meta = json.loads(sidecar_path(path).read_text())
        config = AgentConfig(**meta["config"])
        agent = cls(config, online, online.copy(), online.zeros_like())
        agent.gradient_steps = int(meta["gradient_steps"])
        agent.env_steps = int(meta["env_steps"])
        return agent


def sidecar_path(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.name + ".meta.json")
