"""Reference optimizers over repair orders: exhaustive enumeration and a permutation GA.

Both score an order by replaying it one component at a time and stopping
as soon as full functionality is back, so trailing redundant repairs never
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import DamageScenario, RecoveryEnv, ResilienceCurve, compute_lor
from .errors import ComplexityError, InputError
from .functionality import FunctionalityEvaluator, state_to_mask

DEFAULT_MAX_ENUM = 9


@dataclass(frozen=True)
class SequenceSolution:
    order: tuple[int, ...]
    lor: float
    curve: ResilienceCurve
    history: tuple[float, ...] = ()


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    generations: int = 200
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    tournament_size: int = 3
    elite_count: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 1 or self.generations < 0:
            raise InputError("population_size must be >= 1 and generations >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InputError(f"{name} must lie in [0, 1]")
        if not 1 <= self.tournament_size <= self.population_size:
            raise InputError("tournament_size must lie in 1..population_size")
        if not 0 <= self.elite_count <= self.population_size:
            raise InputError("elite_count must lie in 0..population_size")


class _Scorer:
    """LoR of repair orders from one scenario, sharing a functionality memo."""

    def __init__(self, env: RecoveryEnv, scenario: DamageScenario):
        self.evaluator: FunctionalityEvaluator = env.evaluator
        self.durations = env.spec.durations
        self.f0 = env.f0
        self.start_mask = state_to_mask(scenario.initial_state)
        self.f_start = self.evaluator.from_mask(self.start_mask)

    def lor(self, order: Sequence[int]) -> tuple[float, int]:
        """LoR and the number of repairs actually needed."""
        mask, f, total, t = self.start_mask, self.f_start, 0.0, 0.0
        for k, c in enumerate(order):
            if f == self.f0:
                return total, k
            # same float expression as compute_lor so replays match exactly
            t_next = t + self.durations[c]
            total += (self.f0 - f) * (t_next - t)
            t = t_next
            mask |= 1 << c
            f = self.evaluator.from_mask(mask)
        if f != self.f0:
            raise InputError("order does not restore full functionality")
        return total, len(order)

    def curve(self, order: Sequence[int]) -> ResilienceCurve:
        mask, f, t = self.start_mask, self.f_start, 0.0
        times, values = [0.0], [f]
        for c in order:
            if f == self.f0:
                break
            mask |= 1 << c
            f = self.evaluator.from_mask(mask)
            t += self.durations[c]
            times.append(t)
            values.append(f)
        return ResilienceCurve(tuple(times), tuple(values), self.f0)


def enumerate_optimal(
    env: RecoveryEnv,
    scenario: DamageScenario,
    max_enum: int = DEFAULT_MAX_ENUM,
) -> tuple[SequenceSolution, list[ResilienceCurve]]:
    """Exhaustively search repair orders of the damaged components.

    Orders are explored as a prefix tree in ascending component order and cut
    where functionality is restored, which covers every permutation.  Returns
    the first order found with minimal LoR and the distinct curves seen.
    """
    damaged = scenario.damaged
    if len(damaged) > max_enum:
        raise ComplexityError(
            f"{len(damaged)} damaged components exceed the enumeration limit of {max_enum} (raise --max-enum)"
        )
    scorer = _Scorer(env, scenario)
    f0, durations, evaluator = scorer.f0, scorer.durations, scorer.evaluator
    best_lor = math.inf
    best_order: tuple[int, ...] = ()
    curves: dict[tuple, ResilienceCurve] = {}
    path: list[int] = []
    times: list[float] = [0.0]
    values: list[float] = [scorer.f_start]

    def visit(mask: int, f: float, t: float, lor: float) -> None:
        nonlocal best_lor, best_order
        if f == f0:
            key = (tuple(times), tuple(values))
            if key not in curves:
                curves[key] = ResilienceCurve(key[0], key[1], f0)
            if lor < best_lor:
                best_lor, best_order = lor, tuple(path)
            return
        for c in damaged:
            if (mask >> c) & 1:
                continue
            nmask = mask | (1 << c)
            nf = evaluator.from_mask(nmask)
            t_next = t + durations[c]
            path.append(c)
            times.append(t_next)
            values.append(nf)
            visit(nmask, nf, t_next, lor + (f0 - f) * (t_next - t))
            path.pop()
            times.pop()
            values.pop()

    visit(scorer.start_mask, scorer.f_start, 0.0, 0.0)
    if not math.isfinite(best_lor):
        raise InputError("no repair order restores full functionality")
    best = SequenceSolution(best_order, best_lor, scorer.curve(best_order))
    return best, list(curves.values())


def _order_crossover(p1: tuple[int, ...], p2: tuple[int, ...], lo: int, hi: int) -> tuple[int, ...]:
    """Keep ``p1[lo:hi]`` in place; fill the other slots with the rest of ``p2`` in its order."""
    segment = p1[lo:hi]
    kept = set(segment)
    fill = [x for x in p2 if x not in kept]
    return tuple(fill[:lo]) + segment + tuple(fill[lo:])


def _tournament_winners(scores: np.ndarray, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` tournaments of ``size`` distinct entrants; ties go to the lower index."""
    pop = scores.size
    picks = np.argpartition(rng.random((count, pop)), size - 1, axis=1)[:, :size]
    entrant = scores[picks]
    best = entrant.min(axis=1, keepdims=True)
    return np.where(entrant == best, picks, pop).min(axis=1)


def ga_optimize(env: RecoveryEnv, scenario: DamageScenario, config: GaConfig = GaConfig()) -> SequenceSolution:
    """Permutation GA minimizing LoR.

    Tournament selection, order crossover, swap mutation and elitism; the
    best individual ever evaluated is returned together with the best-so-far
    LoR after each generation.
    """
    damaged = np.array(scenario.damaged, dtype=np.int64)
    m = damaged.size
    if m == 0:
        raise InputError("scenario has no damaged component")
    scorer = _Scorer(env, scenario)
    rng = np.random.default_rng(config.seed)
    memo: dict[tuple[int, ...], float] = {}
    pop_size = config.population_size

    def fitness(ind: tuple[int, ...]) -> float:
        val = memo.get(ind)
        if val is None:
            val = memo[ind] = scorer.lor(ind)[0]
        return val

    population = [tuple(int(c) for c in rng.permutation(damaged)) for _ in range(pop_size)]
    scores = np.array([fitness(ind) for ind in population])
    best_i = int(np.argmin(scores))
    best_ind, best_lor = population[best_i], float(scores[best_i])
    history = [best_lor]
    n_new = pop_size - config.elite_count

    for _ in range(config.generations):
        ranked = np.lexsort((np.arange(pop_size), scores))
        children = [population[i] for i in ranked[: config.elite_count]]
        if n_new:
            parents = _tournament_winners(scores, 2 * n_new, config.tournament_size, rng).reshape(n_new, 2)
            do_cross = rng.random(n_new) < config.crossover_rate
            do_mutate = rng.random(n_new) < config.mutation_rate
            a = rng.integers(0, m + 1, n_new)
            b = rng.integers(0, m, n_new)
            b = b + (b >= a)
            swap_i = rng.integers(0, m, n_new)
            swap_j = rng.integers(0, max(m - 1, 1), n_new)
            swap_j = swap_j + (swap_j >= swap_i)
            for k in range(n_new):
                child = population[parents[k, 0]]
                if m > 1 and do_cross[k]:
                    lo, hi = (a[k], b[k]) if a[k] < b[k] else (b[k], a[k])
                    child = _order_crossover(child, population[parents[k, 1]], lo, hi)
                if m > 1 and do_mutate[k]:
                    lst = list(child)
                    i, j = swap_i[k], swap_j[k]
                    lst[i], lst[j] = lst[j], lst[i]
                    child = tuple(lst)
                children.append(child)
        population = children
        scores = np.array([fitness(ind) for ind in population])
        gen_best = int(np.argmin(scores))
        if scores[gen_best] < best_lor:
            best_ind, best_lor = population[gen_best], float(scores[gen_best])
        history.append(best_lor)

    lor, used = scorer.lor(best_ind)
    order = best_ind[:used]
    return SequenceSolution(order, lor, scorer.curve(order), tuple(history))


def random_sequence(env: RecoveryEnv, scenario: DamageScenario, seed=None) -> SequenceSolution:
    """A single uniformly random repair order (truncated at recovery)."""
    rng = np.random.default_rng(seed)
    scorer = _Scorer(env, scenario)
    perm = rng.permutation(np.array(scenario.damaged, dtype=np.int64)).tolist()
    lor, used = scorer.lor(perm)
    order = tuple(int(c) for c in perm[:used])
    return SequenceSolution(order, lor, scorer.curve(order))


def check_solution(env: RecoveryEnv, scenario: DamageScenario, solution: SequenceSolution) -> bool:
    """True iff replaying ``solution.order`` through the environment gives its LoR and curve."""
    env.reset(scenario)
    for c in solution.order:
        if env.done:
            return False
        env.step(c)
    if not env.done:
        return False
    curve = env.curve()
    return compute_lor(curve) == solution.lor and curve == solution.curve
