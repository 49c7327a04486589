"""System functionality as the minimum over input/transform/output part capacities.

Two evaluators are supported:

* ``capacity-sum``: a bay contributes its load capacity whenever its own
  component is operational.
* ``path-accessibility``: a bay contributes when supply reaches its
  breakpoint vertex from a source and the breakpoint reaches a load.  A
  breakpoint that is itself a source (load) counts as supplied (delivering)
  through a zero-length link.

``evaluate`` goes through the full reachability matrix and is the reference
route.  ``FunctionalityEvaluator`` answers the same question with bitset
searches and a memo table; it is what the environment uses in hot loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InputError
from .network import SystemSpec, as_state, build_adjacency, reachability

__all__ = [
    "Part",
    "Evaluator",
    "BaySpec",
    "FunctionalityModel",
    "evaluate",
    "full_functionality",
    "part_totals",
    "FunctionalityEvaluator",
    "state_to_mask",
]


class Part(str, Enum):
    INPUT = "input"
    TRANSFORM = "transform"
    OUTPUT = "output"


class Evaluator(str, Enum):
    CAPACITY_SUM = "capacity-sum"
    PATH_ACCESSIBILITY = "path-accessibility"


PARTS = (Part.INPUT, Part.TRANSFORM, Part.OUTPUT)


@dataclass(frozen=True)
class BaySpec:
    part: Part
    breakpoint: int
    capacity: float
    component: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "part", Part(self.part))
        object.__setattr__(self, "capacity", float(self.capacity))
        if not np.isfinite(self.capacity) or self.capacity < 0:
            raise InputError(f"bay capacity must be a nonnegative number, got {self.capacity}")


@dataclass(frozen=True)
class FunctionalityModel:
    bays: tuple[BaySpec, ...]
    evaluator: Evaluator = Evaluator.PATH_ACCESSIBILITY

    def __post_init__(self) -> None:
        object.__setattr__(self, "bays", tuple(self.bays))
        object.__setattr__(self, "evaluator", Evaluator(self.evaluator))
        for part in PARTS:
            caps = [b.capacity for b in self.bays if b.part is part]
            if not caps:
                raise InputError(f"no bay defined for part {part.value!r}")
            if sum(caps) <= 0:
                raise InputError(f"total capacity of part {part.value!r} must be positive")
        if self.evaluator is Evaluator.CAPACITY_SUM:
            missing = [i for i, b in enumerate(self.bays) if b.component is None]
            if missing:
                raise InputError(f"capacity-sum bays need a component; bays {missing} have none")

    def with_evaluator(self, evaluator: Evaluator | str) -> "FunctionalityModel":
        return FunctionalityModel(self.bays, Evaluator(evaluator))

    def check_against(self, spec: SystemSpec) -> None:
        """Raise ``InputError`` if any bay references something outside ``spec``."""
        for i, b in enumerate(self.bays):
            if not 0 <= b.breakpoint < spec.vertex_count:
                raise InputError(f"bay {i}: breakpoint {b.breakpoint} outside 0..{spec.vertex_count - 1}")
            if b.component is not None and not 0 <= b.component < spec.component_count:
                raise InputError(f"bay {i}: component {b.component} outside 0..{spec.component_count - 1}")


def _accessible(spec: SystemSpec, closure: np.ndarray, vertex: int) -> bool:
    src = vertex in spec.sources or bool(closure[list(spec.sources), vertex].any())
    dst = vertex in spec.loads or bool(closure[vertex, list(spec.loads)].any())
    return src and dst


def part_totals(spec: SystemSpec, model: FunctionalityModel, state) -> dict[Part, float]:
    """Accessible capacity summed per part."""
    model.check_against(spec)
    s = as_state(spec, state)
    totals = {p: 0.0 for p in PARTS}
    if model.evaluator is Evaluator.CAPACITY_SUM:
        for b in model.bays:
            if s[b.component]:
                totals[b.part] += b.capacity
        return totals
    closure = reachability(build_adjacency(spec, s))
    for b in model.bays:
        if _accessible(spec, closure, b.breakpoint):
            totals[b.part] += b.capacity
    return totals


def evaluate(spec: SystemSpec, model: FunctionalityModel, state) -> float:
    """Functionality in MW of ``state`` (reference implementation)."""
    return min(part_totals(spec, model, state).values())


def full_functionality(spec: SystemSpec, model: FunctionalityModel) -> float:
    return evaluate(spec, model, spec.all_intact())


def state_to_mask(state: Sequence[int] | np.ndarray) -> int:
    """Pack a binary state into an int, bit ``i`` set iff component ``i`` works."""
    arr = np.asarray(state, dtype=np.uint8)
    return int.from_bytes(np.packbits(arr, bitorder="little").tobytes(), "little")


class FunctionalityEvaluator:
    """Memoized functionality lookup keyed by the operational-component bitmask."""

    def __init__(self, spec: SystemSpec, model: FunctionalityModel, cache_limit: int = 2_000_000):
        model.check_against(spec)
        self.spec = spec
        self.model = model
        self.cache_limit = cache_limit
        self._cache: dict[int, float] = {}
        self._out: list[list[tuple[int, int]]] = [[] for _ in range(spec.vertex_count)]
        self._in: list[list[tuple[int, int]]] = [[] for _ in range(spec.vertex_count)]
        for u, v, c in spec.edges:
            self._out[u].append((v, c))
            self._in[v].append((u, c))
        self._parts = [PARTS.index(b.part) for b in model.bays]
        self.f0 = self.from_mask((1 << spec.component_count) - 1)

    def _sweep(self, start: Sequence[int], adjacency: list[list[tuple[int, int]]], mask: int) -> int:
        seen = 0
        for x in start:
            seen |= 1 << x
        stack = list(start)
        while stack:
            x = stack.pop()
            for y, c in adjacency[x]:
                if (mask >> c) & 1 and not (seen >> y) & 1:
                    seen |= 1 << y
                    stack.append(y)
        return seen

    def _compute(self, mask: int) -> float:
        totals = [0.0, 0.0, 0.0]
        if self.model.evaluator is Evaluator.CAPACITY_SUM:
            for part, b in zip(self._parts, self.model.bays):
                if (mask >> b.component) & 1:
                    totals[part] += b.capacity
        else:
            fwd = self._sweep(self.spec.sources, self._out, mask)
            bwd = self._sweep(self.spec.loads, self._in, mask)
            ok = fwd & bwd
            for part, b in zip(self._parts, self.model.bays):
                if (ok >> b.breakpoint) & 1:
                    totals[part] += b.capacity
        return min(totals)

    def from_mask(self, mask: int) -> float:
        value = self._cache.get(mask)
        if value is None:
            value = self._compute(mask)
            if len(self._cache) >= self.cache_limit:
                self._cache.clear()
            self._cache[mask] = value
        return value

    def __call__(self, state) -> float:
        return self.from_mask(state_to_mask(state))
