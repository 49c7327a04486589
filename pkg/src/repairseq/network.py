"""Directed-graph system model and reachability under a component state.

Vertices and components are 0-indexed.  Each edge is backed by exactly one
repairable component; a component may back several parallel edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "SystemSpec",
    "as_state",
    "build_adjacency",
    "reachability",
    "is_reachable_any",
    "reaches_any",
]


@dataclass(frozen=True)
class SystemSpec:
    """Topology of a repairable system.

    Attributes:
        vertex_count: number of graph vertices.
        edges: ``(tail, head, component)`` triples.
        component_count: number of repairable components.
        sources: vertices where supply enters.
        loads: vertices where service is delivered.
        durations: repair duration of each component in days.
        name: free-form label.
    """

    vertex_count: int
    edges: tuple[tuple[int, int, int], ...]
    component_count: int
    sources: tuple[int, ...]
    loads: tuple[int, ...]
    durations: tuple[float, ...] = field(default=())
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple((int(u), int(v), int(c)) for u, v, c in self.edges))
        object.__setattr__(self, "sources", tuple(sorted({int(s) for s in self.sources})))
        object.__setattr__(self, "loads", tuple(sorted({int(s) for s in self.loads})))
        if not self.durations:
            object.__setattr__(self, "durations", (1.0,) * self.component_count)
        else:
            object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        self._validate()

    def _validate(self) -> None:
        v, n = self.vertex_count, self.component_count
        if v < 1 or n < 1:
            raise InputError("vertex_count and component_count must be positive")
        for u, w, c in self.edges:
            if not (0 <= u < v and 0 <= w < v):
                raise InputError(f"edge ({u}, {w}) has an endpoint outside 0..{v - 1}")
            if not 0 <= c < n:
                raise InputError(f"edge ({u}, {w}) references component {c} outside 0..{n - 1}")
        if not self.sources or not self.loads:
            raise InputError("source and load vertex sets must be nonempty")
        if set(self.sources) & set(self.loads):
            raise InputError("source and load vertex sets must be disjoint")
        for s in self.sources + self.loads:
            if not 0 <= s < v:
                raise InputError(f"terminal vertex {s} outside 0..{v - 1}")
        if len(self.durations) != n:
            raise InputError(f"expected {n} repair durations, got {len(self.durations)}")
        if any(not np.isfinite(d) or d <= 0 for d in self.durations):
            raise InputError("repair durations must be finite and strictly positive")

    def all_intact(self) -> np.ndarray:
        return np.ones(self.component_count, dtype=np.int8)

    def all_damaged(self) -> np.ndarray:
        return np.zeros(self.component_count, dtype=np.int8)


def as_state(spec: SystemSpec, state: Sequence[int] | np.ndarray) -> np.ndarray:
    """Validate a binary component state and return it as an int8 array."""
    arr = np.asarray(state)
    if arr.ndim != 1 or arr.shape[0] != spec.component_count:
        raise InputError(f"state must have length {spec.component_count}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise InputError("state entries must be exactly 0 or 1")
    return arr.astype(np.int8)


def build_adjacency(spec: SystemSpec, state: Sequence[int] | np.ndarray) -> np.ndarray:
    """Boolean adjacency of the edges whose component is operational."""
    s = as_state(spec, state)
    adj = np.zeros((spec.vertex_count, spec.vertex_count), dtype=bool)
    for u, v, c in spec.edges:
        if s[c]:
            adj[u, v] = True
    return adj


def reachability(adjacency: np.ndarray) -> np.ndarray:
    """Transitive closure: entry (i, j) is True iff a path of length >= 1 runs i -> j.

    Boolean stand-in for the matrix power sum A + A^2 + ... + A^v, which is
    only ever compared against zero and overflows for moderate v.
    """
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise InputError(f"adjacency must be square, got shape {adj.shape}")
    closure = adj.copy()
    for k in range(closure.shape[0]):
        # Warshall: any i reaching k now reaches everything k reaches
        closure |= np.outer(closure[:, k], closure[k, :])
    return closure


def _check_vertices(closure: np.ndarray, vertices: Iterable[int]) -> list[int]:
    vs = [int(x) for x in vertices]
    if not vs:
        raise InputError("vertex set must be nonempty")
    n = closure.shape[0]
    for x in vs:
        if not 0 <= x < n:
            raise InputError(f"vertex {x} outside 0..{n - 1}")
    return vs


def is_reachable_any(closure: np.ndarray, from_set: Iterable[int], to: int) -> bool:
    """True iff some vertex of ``from_set`` reaches ``to``."""
    frm = _check_vertices(closure, from_set)
    (t,) = _check_vertices(closure, [to])
    return bool(closure[frm, t].any())


def reaches_any(closure: np.ndarray, frm: int, to_set: Iterable[int]) -> bool:
    """True iff ``frm`` reaches some vertex of ``to_set``."""
    (f,) = _check_vertices(closure, [frm])
    to = _check_vertices(closure, to_set)
    return bool(closure[f, to].any())
