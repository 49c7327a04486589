"""Post-disaster recovery as a deterministic MDP.

A step repairs up to ``resource_units`` damaged components at once; all of
them finish after the longest of their repair durations.  The reward is the
functionality gained per day of that step, so the rewards of a finished
episode, weighted by step durations, telescope to ``F0 - F_d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, InputError, InvalidActionError, ResourceError
from .functionality import FunctionalityEvaluator, FunctionalityModel
from .network import SystemSpec, as_state

__all__ = [
    "WorstCase",
    "RandomK",
    "DamageScenario",
    "ResilienceCurve",
    "EpisodeRecord",
    "RecoveryEnv",
    "valid_actions",
    "compute_lor",
    "sample_scenario",
    "replay_sequence",
]


@dataclass(frozen=True)
class WorstCase:
    """Every component damaged."""

    def __str__(self) -> str:
        return "worst"


@dataclass(frozen=True)
class RandomK:
    """Exactly ``k`` components damaged, drawn uniformly without replacement."""

    k: int

    def __str__(self) -> str:
        return f"random{self.k}"


ScenarioKind = WorstCase | RandomK


@dataclass(frozen=True, eq=False)
class DamageScenario:
    initial_state: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.initial_state, dtype=np.int8).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "initial_state", arr)

    @classmethod
    def from_damaged(cls, spec: SystemSpec, damaged: Iterable[int], label: str = "") -> "DamageScenario":
        state = spec.all_intact()
        for c in damaged:
            c = int(c)
            if not 0 <= c < spec.component_count:
                raise InputError(f"damaged component {c} outside 0..{spec.component_count - 1}")
            state[c] = 0
        return cls(state, label)

    @property
    def damaged(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.initial_state == 0)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DamageScenario):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.initial_state, other.initial_state)

    def __hash__(self) -> int:
        return hash((self.label, self.initial_state.tobytes()))


@dataclass(frozen=True)
class ResilienceCurve:
    """Step-function functionality trajectory.

    ``values[k]`` holds on ``[times[k], times[k + 1])``; the last point marks
    full recovery.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    f0: float

    def __post_init__(self) -> None:
        if len(self.times) != len(self.values) or not self.times:
            raise InputError("curve needs matching, nonempty time and value lists")
        if self.times[0] != 0.0:
            raise InputError("curve must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InputError("curve times must be strictly increasing")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise InputError("curve values must be nondecreasing")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.values))

    def csv_rows(self) -> list[str]:
        return ["time,functionality"] + [f"{t!r},{f!r}" for t, f in self.points]


def compute_lor(curve: ResilienceCurve) -> float:
    """Area between ``F0`` and the step curve up to full recovery, MW*day."""
    if curve.values[-1] != curve.f0:
        raise ContractViolation(
            f"curve ends at {curve.values[-1]} MW, not at full functionality {curve.f0} MW"
        )
    total = 0.0
    for k in range(len(curve.times) - 1):
        total += (curve.f0 - curve.values[k]) * (curve.times[k + 1] - curve.times[k])
    return total


@dataclass(frozen=True)
class EpisodeRecord:
    curve: ResilienceCurve
    repair_sequence: tuple[int, ...]
    return_discounted: float
    lor: float
    rewards: tuple[float, ...] = ()
    elapsed: tuple[float, ...] = ()


def valid_actions(state: Sequence[int] | np.ndarray) -> list[int]:
    """Indices of damaged components, i.e. the repairs that can be scheduled."""
    return [int(i) for i in np.flatnonzero(np.asarray(state) == 0)]


class RecoveryEnv:
    """Single-owner recovery environment.

    Invalid or oversized action sets raise instead of being silently
    skipped, so any masking bug in an agent surfaces immediately.
    """

    def __init__(
        self,
        spec: SystemSpec,
        model: FunctionalityModel,
        resource_units: int = 1,
        evaluator: FunctionalityEvaluator | None = None,
    ):
        if resource_units < 1:
            raise InputError("resource_units must be >= 1")
        self.spec = spec
        self.model = model
        self.resource_units = int(resource_units)
        self.evaluator = evaluator or FunctionalityEvaluator(spec, model)
        self.f0 = self.evaluator.f0
        self.steps_executed = 0
        self.state: np.ndarray | None = None

    def functionality(self, state) -> float:
        return self.evaluator(state)

    def reset(self, scenario: DamageScenario) -> np.ndarray:
        self.state = as_state(self.spec, scenario.initial_state).copy()
        self.time = 0.0
        self.f_d = self.evaluator(self.state)
        self.current_f = self.f_d
        self._times = [0.0]
        self._values = [self.f_d]
        self._sequence: list[int] = []
        self._rewards: list[float] = []
        self._elapsed: list[float] = []
        self.done = self.f_d == self.f0
        return self.state.copy()

    def valid_actions(self) -> list[int]:
        return valid_actions(self.state)

    def step(self, actions: int | Iterable[int]) -> tuple[np.ndarray, float, float, bool]:
        if self.state is None:
            raise InputError("call reset() before step()")
        if self.done:
            raise InvalidActionError("episode already finished")
        acts = [int(actions)] if np.isscalar(actions) else [int(a) for a in actions]
        if not acts:
            raise InvalidActionError("empty action set")
        if len(acts) > self.resource_units:
            raise ResourceError(f"{len(acts)} repairs requested with {self.resource_units} resource unit(s)")
        if len(set(acts)) != len(acts):
            raise InvalidActionError(f"repeated component in {acts}")
        for a in acts:
            if not 0 <= a < self.spec.component_count or self.state[a] != 0:
                raise InvalidActionError(f"component {a} is not damaged in the current state")

        before = self.current_f
        nxt = self.state.copy()
        nxt[acts] = 1
        after = self.evaluator(nxt)
        elapsed = max(self.spec.durations[a] for a in acts)
        reward = (after - before) / elapsed

        self.state = nxt
        self.time += elapsed
        self.current_f = after
        self._times.append(self.time)
        self._values.append(after)
        self._sequence.extend(acts)
        self._rewards.append(reward)
        self._elapsed.append(elapsed)
        self.done = after == self.f0
        self.steps_executed += 1
        return nxt.copy(), reward, elapsed, self.done

    def curve(self) -> ResilienceCurve:
        return ResilienceCurve(tuple(self._times), tuple(self._values), self.f0)

    def record(self, gamma: float = 1.0) -> EpisodeRecord:
        """Summarize the finished episode."""
        curve = self.curve()
        ret = sum(gamma**k * r for k, r in enumerate(self._rewards))
        return EpisodeRecord(
            curve=curve,
            repair_sequence=tuple(self._sequence),
            return_discounted=ret,
            lor=compute_lor(curve),
            rewards=tuple(self._rewards),
            elapsed=tuple(self._elapsed),
        )


def sample_scenario(spec: SystemSpec, kind: ScenarioKind, seed=None, label: str | None = None) -> DamageScenario:
    """Draw a damage scenario; ``seed`` may be an int or a ``numpy`` Generator."""
    if isinstance(kind, WorstCase):
        return DamageScenario(spec.all_damaged(), label or "worst")
    if isinstance(kind, RandomK):
        if not 0 < kind.k <= spec.component_count:
            raise InputError(f"k must lie in 1..{spec.component_count}, got {kind.k}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        damaged = rng.choice(spec.component_count, size=kind.k, replace=False)
        return DamageScenario.from_damaged(spec, sorted(int(c) for c in damaged), label or f"random{kind.k}")
    raise InputError(f"unknown scenario kind {kind!r}")


def replay_sequence(
    env: RecoveryEnv,
    scenario: DamageScenario,
    sequence: Sequence[int],
    gamma: float = 1.0,
    strict: bool = False,
) -> EpisodeRecord:
    """Repair components one at a time in ``sequence`` order.

    Replay stops as soon as functionality is restored; surplus entries are
    ignored unless ``strict``.  Raises if the sequence runs out first.
    """
    env.reset(scenario)
    for k, c in enumerate(sequence):
        if env.done:
            if strict:
                raise InvalidActionError(f"sequence continues after recovery at position {k}")
            break
        env.step(c)
    if not env.done:
        raise InvalidActionError("sequence ends before functionality is fully restored")
    return env.record(gamma)
