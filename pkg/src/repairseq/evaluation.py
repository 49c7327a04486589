"""Deployment-side harness: greedy rollouts, batch statistics, method comparison and cross-testing.

Wall-clock timings are measured with ``time.perf_counter`` and kept out of
the CSV artifacts, which therefore depend only on inputs and seeds.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .agents import Checkpoint, encode_state, input_dim, select_actions
from .baselines import GaConfig, enumerate_optimal, ga_optimize, random_sequence
from .env import DamageScenario, EpisodeRecord, RandomK, RecoveryEnv, ResilienceCurve, replay_sequence, sample_scenario
from .errors import ComplexityError, InputError
from .neural import forward
from .network import SystemSpec

DS_LEVELS = (8, 16, 32)


@dataclass(frozen=True)
class MethodRow:
    """One method applied to one scenario.  ``lor`` is NaN when the method failed."""

    method: str
    scenario: str
    lor: float
    seconds: float
    sequence: tuple[int, ...] = ()
    curve: ResilienceCurve | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def format_sequence(sequence: Sequence[int], index_base: int = 1) -> str:
    return " ".join(str(c + index_base) for c in sequence)


@dataclass
class ComparisonReport:
    rows: list[MethodRow] = field(default_factory=list)
    index_base: int = 1

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def scenarios(self) -> list[str]:
        return list(dict.fromkeys(r.scenario for r in self.rows))

    def lookup(self, method: str, scenario: str) -> MethodRow | None:
        for r in self.rows:
            if r.method == method and r.scenario == scenario:
                return r
        return None

    def summary(self) -> dict[str, dict[str, float]]:
        """Mean and population standard deviation of LoR per method over successful rows."""
        out = {}
        for m in self.methods():
            rows = [r for r in self.rows if r.method == m]
            lors = np.array([r.lor for r in rows if r.ok])
            out[m] = {
                "count": len(lors),
                "failed": len(rows) - len(lors),
                "mean_lor": float(lors.mean()) if lors.size else math.nan,
                "std_lor": float(lors.std()) if lors.size else math.nan,
                "mean_seconds": float(np.mean([r.seconds for r in rows if r.ok])) if lors.size else math.nan,
            }
        return out

    def win_fraction(self, method: str = "drl", baseline: str = "ga") -> float:
        """Fraction of scenarios, among those both methods solved, where ``method`` LoR <= ``baseline`` LoR."""
        wins = total = 0
        for sc in self.scenarios():
            a, b = self.lookup(method, sc), self.lookup(baseline, sc)
            if a is None or b is None or not (a.ok and b.ok):
                continue
            total += 1
            wins += a.lor <= b.lor
        return wins / total if total else math.nan

    def rows_csv(self) -> str:
        lines = ["method,scenario,lor,sequence,error"]
        for r in self.rows:
            lines.append(f"{r.method},{r.scenario},{r.lor!r},{format_sequence(r.sequence, self.index_base)},{_csv_text(r.error)}")
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["method,count,failed,mean_lor,std_lor"]
        for m, s in self.summary().items():
            lines.append(f"{m},{s['count']},{s['failed']},{s['mean_lor']!r},{s['std_lor']!r}")
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = []
        for m, s in self.summary().items():
            lines.append(
                f"{m:>6}: n={s['count']} failed={s['failed']} mean LoR {s['mean_lor']:.3f} "
                f"(std {s['std_lor']:.3f}) mean time {s['mean_seconds']:.4f} s"
            )
        methods = self.methods()
        if "drl" in methods and "ga" in methods:
            lines.append(f"DRL <= GA in {self.win_fraction():.3f} of scenarios")
        return "\n".join(lines) + "\n"

    def timings(self) -> list[dict]:
        return [{"method": r.method, "scenario": r.scenario, "seconds": r.seconds} for r in self.rows]


def _csv_text(text: str) -> str:
    return text.replace(",", ";").replace("\n", " ")


def check_dimensions(checkpoint: Checkpoint, spec: SystemSpec) -> None:
    expected = input_dim(spec.component_count, checkpoint.resource_units)
    cfg = checkpoint.net.config
    if checkpoint.component_count != spec.component_count or cfg.output_dim != spec.component_count or cfg.input_dim != expected:
        raise InputError(
            f"checkpoint expects {checkpoint.component_count} components (input {cfg.input_dim}), "
            f"system has {spec.component_count}"
        )


def rollout(checkpoint: Checkpoint, env: RecoveryEnv, scenario: DamageScenario, gamma: float = 1.0) -> EpisodeRecord:
    """Greedy masked rollout with the checkpoint's own resource count."""
    check_dimensions(checkpoint, env.spec)
    if env.resource_units != checkpoint.resource_units:
        raise InputError(
            f"checkpoint was trained with {checkpoint.resource_units} resource unit(s), environment has {env.resource_units}"
        )
    state = env.reset(scenario)
    u = checkpoint.resource_units
    while not env.done:
        q = forward(checkpoint.net, encode_state(state, u))
        state, _, _, _ = env.step(select_actions(q, state == 0, u, "greedy"))
    return env.record(gamma)


def generate_scenarios(spec: SystemSpec, count: int, ks: Sequence[int], seed: int, prefix: str = "s") -> list[DamageScenario]:
    """``count`` RandomK scenarios cycling through ``ks``, from one seeded stream."""
    if count < 1 or not ks:
        raise InputError("need count >= 1 and at least one k")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        k = int(ks[i % len(ks)])
        out.append(sample_scenario(spec, RandomK(k), rng, label=f"{prefix}{i:03d}-k{k}"))
    return out


def ds_scenarios(spec: SystemSpec, seed: int, levels: Sequence[int] = DS_LEVELS) -> list[DamageScenario]:
    """One RandomK scenario per severity level, labelled DS1, DS2, ..."""
    rng = np.random.default_rng(seed)
    return [sample_scenario(spec, RandomK(k), rng, label=f"DS{i + 1}") for i, k in enumerate(levels)]


def _timed_row(method: str, scenario: DamageScenario, fn) -> MethodRow:
    started = time.perf_counter()
    try:
        order, lor, curve = fn()
    except (InputError, ComplexityError, RuntimeError) as exc:
        return MethodRow(method, scenario.label, math.nan, time.perf_counter() - started, error=str(exc))
    return MethodRow(method, scenario.label, lor, time.perf_counter() - started, tuple(order), curve)


def drl_row(checkpoint: Checkpoint, env: RecoveryEnv, scenario: DamageScenario, method: str = "drl") -> MethodRow:
    def run():
        rec = rollout(checkpoint, env, scenario)
        return rec.repair_sequence, rec.lor, rec.curve

    return _timed_row(method, scenario, run)


def enum_row(env: RecoveryEnv, scenario: DamageScenario, max_enum: int) -> MethodRow:
    def run():
        best, _ = enumerate_optimal(env, scenario, max_enum)
        return best.order, best.lor, best.curve

    return _timed_row("enum", scenario, run)


def ga_row(env: RecoveryEnv, scenario: DamageScenario, config: GaConfig, seeds: Sequence[int]) -> MethodRow:
    """Best of several GA runs; the reported time covers all of them."""

    def run():
        best = None
        for s in seeds:
            sol = ga_optimize(env, scenario, replace(config, seed=int(s)))
            if best is None or sol.lor < best.lor:
                best = sol
        if best is None:
            raise InputError("no GA seeds given")
        return best.order, best.lor, best.curve

    return _timed_row("ga", scenario, run)


def random_row(env: RecoveryEnv, scenario: DamageScenario, seed: int) -> MethodRow:
    def run():
        sol = random_sequence(env, scenario, seed)
        return sol.order, sol.lor, sol.curve

    return _timed_row("random", scenario, run)


def batch_eval(
    checkpoint: Checkpoint,
    env: RecoveryEnv,
    scenarios: Iterable[DamageScenario],
    method: str = "drl",
) -> ComparisonReport:
    """Independent greedy rollouts; a failing scenario yields an error row instead of aborting."""
    return ComparisonReport([drl_row(checkpoint, env, sc, method) for sc in scenarios])


def compare(
    env: RecoveryEnv,
    scenarios: Sequence[DamageScenario],
    checkpoint: Checkpoint | None = None,
    ga_config: GaConfig = GaConfig(),
    ga_seeds: Sequence[int] = tuple(range(10)),
    max_enum: int | None = 9,
    random_seed: int | None = None,
) -> ComparisonReport:
    """Run enumeration (where small enough), multi-seed GA and the DRL rollout on each scenario."""
    report = ComparisonReport()
    for sc in scenarios:
        if max_enum is not None and len(sc.damaged) <= max_enum:
            report.rows.append(enum_row(env, sc, max_enum))
        if ga_seeds:
            report.rows.append(ga_row(env, sc, ga_config, ga_seeds))
        if random_seed is not None:
            report.rows.append(random_row(env, sc, random_seed))
        if checkpoint is not None:
            report.rows.append(drl_row(checkpoint, env, sc))
    return report


def replay_check(env: RecoveryEnv, scenarios: Mapping[str, DamageScenario], report: ComparisonReport) -> list[str]:
    """Labels of rows whose sequence does not re-simulate to the reported LoR."""
    bad = []
    for r in report.rows:
        if not r.ok:
            continue
        rec = replay_sequence(env, scenarios[r.scenario], r.sequence, strict=True)
        if rec.lor != r.lor:
            bad.append(f"{r.method}:{r.scenario}")
    return bad


@dataclass
class CrossTestResult:
    models: list[str]
    scenarios: list[str]
    lor: np.ndarray
    rows: list[MethodRow]

    def matrix_csv(self) -> str:
        lines = ["model," + ",".join(self.scenarios)]
        for i, m in enumerate(self.models):
            lines.append(m + "," + ",".join(repr(float(v)) for v in self.lor[i]))
        return "\n".join(lines) + "\n"


def cross_test(
    checkpoints: Mapping[str, Checkpoint],
    env: RecoveryEnv,
    scenarios: Sequence[DamageScenario],
) -> CrossTestResult:
    """One greedy rollout per (model, scenario) cell."""
    if not checkpoints:
        raise InputError("cross_test needs at least one checkpoint")
    for name, ck in checkpoints.items():
        try:
            check_dimensions(ck, env.spec)
        except InputError as exc:
            raise InputError(f"{name}: {exc}") from exc
    models = list(checkpoints)
    labels = [s.label for s in scenarios]
    lor = np.full((len(models), len(scenarios)), math.nan)
    rows = []
    for i, name in enumerate(models):
        for j, sc in enumerate(scenarios):
            row = drl_row(checkpoints[name], env, sc, method=name)
            rows.append(row)
            lor[i, j] = row.lor
    return CrossTestResult(models, labels, lor, rows)


def write_curves(rows: Iterable[MethodRow], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in rows:
        if r.curve is None:
            continue
        path = directory / f"{r.method}_{r.scenario}.csv"
        path.write_text("\n".join(r.curve.csv_rows()) + "\n")
        paths.append(path)
    return paths


def write_report(report: ComparisonReport, directory: str | Path) -> dict[str, Path]:
    """``report.csv``, ``summary.csv``, ``summary.txt``, ``timings.json`` and ``curves/``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": directory / "report.csv",
        "summary": directory / "summary.csv",
        "summary_text": directory / "summary.txt",
        "timings": directory / "timings.json",
    }
    paths["report"].write_text(report.rows_csv())
    paths["summary"].write_text(report.summary_csv())
    paths["summary_text"].write_text(report.summary_text())
    paths["timings"].write_text(json.dumps(report.timings(), indent=2) + "\n")
    write_curves(report.rows, directory / "curves")
    paths["curves"] = directory / "curves"
    return paths
