"""Deep Q-learning agents (DQN, double DQN, dueling variants) for repair sequencing."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .env import DamageScenario, RandomK, RecoveryEnv, WorstCase, sample_scenario
from .errors import ContractViolation, InputError, TrainingAborted
from .neural import AdamState, MlpConfig, QNetwork, adam_step, forward, load_network, loss_and_grads, save_network

LOG = logging.getLogger(__name__)

ALGORITHMS = ("dqn", "ddqn", "duel-dqn", "duel-ddqn")
RULES = ("random", "greedy", "roulette")
ROULETTE_SHIFT = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "dqn"
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_decay: float = 100
    replay_capacity: int = 10_000
    batch_size: int = 256
    gamma: float = 0.95
    learning_rate: float = 1e-3
    target_sync: int = 50
    episodes: int = 500
    exploitation: str = "greedy"
    scenario_policy: WorstCase | RandomK = field(default_factory=WorstCase)
    hidden_layers: tuple[int, ...] = (32,)
    normalization: bool = False
    resource_units: int = 1
    eval_scenarios: int = 5
    reward_scale: str = "f0"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.exploitation not in ("greedy", "roulette"):
            raise InputError("exploitation must be 'greedy' or 'roulette'")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise InputError("need 0 <= eps_end <= eps_start <= 1")
        if self.eps_decay <= 0:
            raise InputError("eps_decay must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise InputError("gamma must lie in [0, 1]")
        if not self.replay_capacity >= self.batch_size >= 1:
            raise InputError("need replay_capacity >= batch_size >= 1")
        if self.target_sync < 1 or self.episodes < 1 or self.resource_units < 1:
            raise InputError("target_sync, episodes and resource_units must be >= 1")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if self.reward_scale not in ("f0", "none"):
            raise InputError("reward_scale must be 'f0' or 'none'")

    @property
    def double(self) -> bool:
        return self.algorithm.endswith("ddqn")

    @property
    def head(self) -> str:
        return "dueling" if self.algorithm.startswith("duel") else "plain"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["scenario_policy"] = str(self.scenario_policy)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


def mimo_defaults(**overrides: Any) -> TrainConfig:
    """Hyperparameters tuned for the five-component example network."""
    return replace(TrainConfig(), **overrides)


def substation_defaults(**overrides: Any) -> TrainConfig:
    """Hyperparameters for the 43-component substation (double DQN, roulette exploitation)."""
    base = TrainConfig(
        algorithm="ddqn",
        eps_start=1.0,
        eps_end=0.001,
        eps_decay=1000,
        replay_capacity=100_000,
        batch_size=128,
        gamma=0.95,
        learning_rate=1e-4,
        target_sync=100,
        episodes=10_000,
        exploitation="roulette",
        hidden_layers=(128, 128),
        normalization=True,
    )
    return replace(base, **overrides)


def parse_scenario_policy(text: str) -> WorstCase | RandomK:
    """``"worst"`` or ``"random<k>"`` / ``"k<k>"``."""
    t = text.strip().lower()
    if t in ("worst", "worstcase", "worst-case"):
        return WorstCase()
    for prefix in ("random", "k"):
        if t.startswith(prefix) and t[len(prefix):].isdigit():
            return RandomK(int(t[len(prefix):]))
    raise InputError(f"unknown scenario policy {text!r}")


def epsilon(episode: int, config: TrainConfig) -> float:
    """Linear decay by episode, floored at ``eps_end``."""
    if episode < 0:
        raise InputError("episode must be >= 0")
    eps = config.eps_start - (config.eps_start - config.eps_end) / config.eps_decay * episode
    return max(config.eps_end, eps)


def encode_state(state: np.ndarray, resource_units: int = 1) -> np.ndarray:
    """Network input: the raw 0/1 state, with ``u`` appended only when ``u > 1``."""
    x = np.asarray(state, dtype=np.float64)
    if resource_units > 1:
        x = np.append(x, float(resource_units))
    return x


def input_dim(component_count: int, resource_units: int) -> int:
    return component_count + (1 if resource_units > 1 else 0)


def roulette_probabilities(q_valid: np.ndarray) -> np.ndarray:
    """Selection probabilities proportional to Q.

    Negative values are shifted so the smallest becomes ``ROULETTE_SHIFT``;
    an all-zero vector falls back to uniform.
    """
    q = np.asarray(q_valid, dtype=np.float64)
    if q.min() < 0:
        q = q - q.min() + ROULETTE_SHIFT
    total = q.sum()
    if not np.isfinite(total) or total <= 0:
        return np.full(q.shape, 1.0 / q.size)
    return q / total


def select_actions(
    q_values: np.ndarray,
    mask: np.ndarray,
    u: int,
    rule: str,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Pick ``min(u, #valid)`` distinct valid actions.

    ``mask[i]`` is True for selectable actions.  Greedy breaks ties toward
    the lowest index.
    """
    valid = np.flatnonzero(np.asarray(mask, dtype=bool))
    if valid.size == 0:
        raise ContractViolation("no valid action to select")
    count = min(int(u), valid.size)
    if rule == "greedy":
        q = np.asarray(q_values, dtype=np.float64)[valid]
        order = np.argsort(-q, kind="stable")
        return [int(valid[i]) for i in order[:count]]
    if rng is None:
        raise InputError(f"rule {rule!r} needs a random generator")
    if rule == "random":
        return [int(a) for a in rng.choice(valid, size=count, replace=False)]
    if rule == "roulette":
        remaining = list(valid)
        q_all = np.asarray(q_values, dtype=np.float64)
        chosen = []
        for _ in range(count):
            probs = roulette_probabilities(q_all[remaining])
            cum = np.cumsum(probs)
            r = rng.random() * cum[-1]
            k = int(np.searchsorted(cum, r, side="right"))
            k = min(k, len(remaining) - 1)
            while probs[k] == 0.0:
                k -= 1
            chosen.append(int(remaining.pop(k)))
        return chosen
    raise InputError(f"unknown selection rule {rule!r}")


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, input_width: int, action_count: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, input_width))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, input_width))
        self.next_valid = np.zeros((capacity, action_count), dtype=bool)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action: int, reward: float, next_state, next_valid, done: bool) -> None:
        i = self._pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.next_valid[i] = next_valid
        self.dones[i] = done
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if batch_size > self.size:
            raise InputError(f"cannot sample {batch_size} from {self.size} stored transitions")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "next_valid": self.next_valid[idx],
            "dones": self.dones[idx],
            "indices": idx,
        }


def compute_targets(batch: dict[str, np.ndarray], policy: QNetwork, target: QNetwork, gamma: float, double: bool) -> np.ndarray:
    """Bootstrap targets; maxima and argmaxima range over valid next actions only."""
    rewards = batch["rewards"]
    valid = batch["next_valid"]
    terminal = batch["dones"] | ~valid.any(axis=1)
    q_target = forward(target, batch["next_states"])
    if double:
        q_policy = np.where(valid, forward(policy, batch["next_states"]), -np.inf)
        best = np.argmax(q_policy, axis=1)
        bootstrap = q_target[np.arange(len(best)), best]
    else:
        bootstrap = np.where(valid, q_target, -np.inf).max(axis=1)
    bootstrap = np.where(terminal, 0.0, bootstrap)
    return rewards + gamma * bootstrap


@dataclass
class Checkpoint:
    """A trained network plus what is needed to use it on a system."""

    net: QNetwork
    algorithm: str
    resource_units: int
    component_count: int
    system: str = ""
    episode: int = -1
    lor: float = math.inf

    def save(self, path: str | Path) -> None:
        meta = {
            "algorithm": self.algorithm,
            "resource_units": self.resource_units,
            "component_count": self.component_count,
            "system": self.system,
            "episode": self.episode,
            "lor": self.lor,
        }
        save_network(self.net, path, meta)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        net, meta = load_network(path)
        return cls(
            net=net,
            algorithm=meta["algorithm"],
            resource_units=int(meta["resource_units"]),
            component_count=int(meta["component_count"]),
            system=meta.get("system", ""),
            episode=int(meta.get("episode", -1)),
            lor=float(meta.get("lor", math.inf)),
        )


def greedy_rollout(net: QNetwork, env: RecoveryEnv, scenario: DamageScenario, gamma: float = 1.0):
    """Pure greedy masked rollout until functionality is restored."""
    state = env.reset(scenario)
    u = env.resource_units
    while not env.done:
        q = forward(net, encode_state(state, u))
        acts = select_actions(q, state == 0, u, "greedy")
        state, _, _, _ = env.step(acts)
    return env.record(gamma)


@dataclass
class TrainingLog:
    episode_reward: list[float] = field(default_factory=list)
    episode_lor: list[float] = field(default_factory=list)
    greedy_lor: list[float] = field(default_factory=list)
    loss_steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    best_episode: int = -1
    best_lor: float = math.inf
    steps: int = 0
    seconds: float = 0.0

    def episode_csv(self) -> str:
        rows = ["episode,reward,lor,greedy_lor"]
        for i, (r, l, g) in enumerate(zip(self.episode_reward, self.episode_lor, self.greedy_lor)):
            rows.append(f"{i},{r!r},{l!r},{g!r}")
        return "\n".join(rows) + "\n"

    def loss_csv(self) -> str:
        rows = ["step,loss"] + [f"{s},{l!r}" for s, l in zip(self.loss_steps, self.losses)]
        return "\n".join(rows) + "\n"


def _eval_scenarios(env: RecoveryEnv, config: TrainConfig, rng: np.random.Generator) -> list[DamageScenario]:
    if isinstance(config.scenario_policy, WorstCase):
        return [sample_scenario(env.spec, WorstCase())]
    return [
        sample_scenario(env.spec, config.scenario_policy, rng, label=f"eval{i}")
        for i in range(config.eval_scenarios)
    ]


def train(
    env: RecoveryEnv,
    config: TrainConfig,
    progress_every: int = 0,
) -> tuple[Checkpoint, TrainingLog]:
    """Run the episode loop and return the best greedy checkpoint.

    After every episode the current policy is rolled out greedily on the
    evaluation scenarios (the worst case, or a fixed seeded draw for
    ``RandomK`` training); the parameters with the lowest total LoR are kept,
    later episodes winning ties.
    """
    if env.resource_units != config.resource_units:
        raise InputError("environment and config disagree on resource units")
    spec = env.spec
    n = spec.component_count
    u = config.resource_units
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    init_seed = int(seeds[0].generate_state(1)[0])
    explore_rng = np.random.default_rng(seeds[1])
    replay_rng = np.random.default_rng(seeds[2])
    scenario_rng = np.random.default_rng(seeds[3])

    mlp = MlpConfig(
        input_dim=input_dim(n, u),
        output_dim=n,
        hidden_layers=config.hidden_layers,
        head=config.head,
        normalization=config.normalization,
        seed=init_seed,
    )
    policy = QNetwork.create(mlp)
    target = policy.copy()
    adam = AdamState.for_params(policy.params)
    buffer = ReplayBuffer(config.replay_capacity, mlp.input_dim, n)
    eval_set = _eval_scenarios(env, config, scenario_rng)
    log = TrainingLog()
    best = Checkpoint(policy.copy(), config.algorithm, u, n, spec.name)
    # Learning targets are in units of F0 when reward_scale == "f0"; the
    # greedy policy is unchanged by this positive rescaling.
    scale = 1.0 / env.f0 if config.reward_scale == "f0" and env.f0 > 0 else 1.0
    started = time.perf_counter()

    for episode in range(config.episodes):
        if isinstance(config.scenario_policy, WorstCase):
            scenario = eval_set[0]
        else:
            scenario = sample_scenario(spec, config.scenario_policy, scenario_rng)
        state = env.reset(scenario)
        eps = epsilon(episode, config)
        total_reward = 0.0
        while not env.done:
            x = encode_state(state, u)
            mask = state == 0
            if explore_rng.random() < eps:
                acts = select_actions(None, mask, u, "random", explore_rng)
            else:
                acts = select_actions(forward(policy, x), mask, u, config.exploitation, explore_rng)
            next_state, reward, _, done = env.step(acts)
            total_reward += reward
            x_next = encode_state(next_state, u)
            for a in acts:
                buffer.add(x, a, reward * scale, x_next, next_state == 0, done)
            state = next_state

            if len(buffer) > config.batch_size:
                batch = buffer.sample(config.batch_size, replay_rng)
                y = compute_targets(batch, policy, target, config.gamma, config.double)
                loss, grads = loss_and_grads(policy, batch["states"], batch["actions"], y)
                if not math.isfinite(loss):
                    raise TrainingAborted(
                        f"non-finite loss at episode {episode}, step {log.steps}; "
                        f"target range [{y.min()}, {y.max()}]"
                    )
                adam_step(policy, grads, adam, config.learning_rate)
                log.loss_steps.append(log.steps)
                log.losses.append(loss)
            log.steps += 1
            if log.steps % config.target_sync == 0:
                target.load_from(policy)

        record = env.record(config.gamma)
        log.episode_reward.append(total_reward)
        log.episode_lor.append(record.lor)
        greedy = sum(greedy_rollout(policy, env, sc).lor for sc in eval_set)
        log.greedy_lor.append(greedy)
        if greedy <= log.best_lor:
            log.best_lor = greedy
            log.best_episode = episode
            best = Checkpoint(policy.copy(), config.algorithm, u, n, spec.name, episode, greedy)
        if progress_every and (episode + 1) % progress_every == 0:
            LOG.info(
                "episode %d eps %.3f lor %.1f greedy %.1f best %.1f",
                episode + 1, eps, record.lor, greedy, log.best_lor,
            )
    log.seconds = time.perf_counter() - started
    return best, log
