"""Command-line front end: ``repairseq <command> [flags]``.

Every artifact-producing command resolves its inputs, creates a run
directory (``$REPAIRSEQ_RUNS`` or ``runs/``, then ``<timestamp>-<seed>``),
writes ``manifest.json`` there and only then starts computing.  ``rerun``
replays a manifest into a fresh directory.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .agents import ALGORITHMS, Checkpoint, TrainConfig, mimo_defaults, parse_scenario_policy, substation_defaults, train
from .baselines import DEFAULT_MAX_ENUM, GaConfig, enumerate_optimal, ga_optimize
from .env import DamageScenario, RecoveryEnv
from .errors import ComplexityError, ContractViolation, InputError, ResourceError, TrainingAborted
from .evaluation import (
    DS_LEVELS,
    ComparisonReport,
    MethodRow,
    check_dimensions,
    compare,
    cross_test,
    ds_scenarios,
    generate_scenarios,
    write_curves,
    write_report,
)
from .fixtures import SystemFile, load_system, parse_scenario_file, scenarios_to_dict

LOG = logging.getLogger("repairseq")
RUNS_ENV = "REPAIRSEQ_RUNS"
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad flag values detected after argparse; reported with exit status 2."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _hidden(text: str) -> tuple[int, ...]:
    vals = _int_list(text)
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("hidden layer widths must be positive integers")
    return tuple(vals)


def _add_common(p: argparse.ArgumentParser, system_required: bool = True) -> None:
    p.add_argument("--system", required=system_required, help="fixture name (mimo, substation) or path to a system JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="run directory (default: $REPAIRSEQ_RUNS or runs/, then <timestamp>-<seed>)")


def _add_scenarios(p: argparse.ArgumentParser, default: str = "worst") -> None:
    p.add_argument(
        "--scenarios", "--scenario", dest="scenarios", default=default,
        help="fixture scenario label(s) comma-separated, 'all', 'ds', 'random:K[,K...]:COUNT', or a scenario JSON file",
    )
    p.add_argument("--damaged", type=_int_list, help="explicit damaged components, in the system file's index base")
    p.add_argument("--scenario-seed", type=int, help="seed for generated scenarios (default: --seed)")
    p.add_argument("--ds-levels", type=_int_list, default=list(DS_LEVELS), help="damage counts for DS1..DSn")


def _add_ga(p: argparse.ArgumentParser, seeds_default: int) -> None:
    d = GaConfig()
    p.add_argument("--ga-seeds", type=int, default=seeds_default, help="number of GA runs (seeds seed..seed+n-1)")
    p.add_argument("--population", type=int, default=d.population_size)
    p.add_argument("--generations", type=int, default=d.generations)
    p.add_argument("--crossover", type=float, default=d.crossover_rate)
    p.add_argument("--mutation", type=float, default=d.mutation_rate)
    p.add_argument("--tournament", type=int, default=d.tournament_size)
    p.add_argument("--elites", type=int, default=d.elite_count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repairseq", description="Repair sequencing by deep Q-learning, with exact and GA baselines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DQN-family agent")
    _add_common(p)
    p.add_argument("--algo", choices=ALGORITHMS, help="default: preset for the system")
    p.add_argument("--preset", choices=("auto", "mimo", "substation"), default="auto")
    p.add_argument("--episodes", type=int)
    p.add_argument("--scenario-policy", help="'worst' or 'random<k>'")
    p.add_argument("--resource-units", type=int)
    p.add_argument("--eps-start", type=float)
    p.add_argument("--eps-end", type=float)
    p.add_argument("--eps-decay", type=float)
    p.add_argument("--replay-capacity", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--target-sync", type=int)
    p.add_argument("--hidden", type=_hidden, help="hidden widths, e.g. 128,128")
    p.add_argument("--normalization", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--exploitation", choices=("greedy", "roulette"))
    p.add_argument("--reward-scale", choices=("f0", "none"))
    p.add_argument("--progress-every", type=int, default=0)

    p = sub.add_parser("rollout", help="greedy rollout of a trained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    _add_scenarios(p)

    p = sub.add_parser("enumerate", help="exhaustive search over repair orders")
    _add_common(p)
    _add_scenarios(p)
    p.add_argument("--max-enum", type=int, default=DEFAULT_MAX_ENUM)

    p = sub.add_parser("ga", help="genetic-algorithm baseline")
    _add_common(p)
    _add_scenarios(p)
    _add_ga(p, seeds_default=1)

    p = sub.add_parser("compare", help="enumeration, GA and DRL on the same scenarios")
    _add_common(p)
    _add_scenarios(p)
    p.add_argument("--checkpoint")
    p.add_argument("--max-enum", type=int, default=DEFAULT_MAX_ENUM)
    p.add_argument("--random-baseline", action="store_true", help="also score one random order per scenario")
    _add_ga(p, seeds_default=10)

    p = sub.add_parser("crosstest", help="roll several checkpoints out on DS scenarios")
    _add_common(p)
    _add_scenarios(p, default="ds")
    p.add_argument("--checkpoints", nargs="+", required=True, metavar="NAME=PATH")

    p = sub.add_parser("genscenarios", help="write a seeded RandomK scenario file")
    _add_common(p)
    p.add_argument("--k", type=_int_list, required=True, help="damage count(s), cycled across scenarios")
    p.add_argument("--count", type=int, required=True)

    p = sub.add_parser("rerun", help="repeat a run from its manifest into a new directory")
    p.add_argument("manifest")
    p.add_argument("--out")
    return parser


# ----------------------------------------------------------------- resolution


def _resolve_system(name: str) -> SystemFile:
    try:
        return load_system(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc


def _resolve_scenarios(args: argparse.Namespace, system: SystemFile) -> list[DamageScenario]:
    spec, base = system.spec, system.index_base
    seed = args.seed if args.scenario_seed is None else args.scenario_seed
    if args.damaged is not None:
        try:
            return [DamageScenario.from_damaged(spec, [c - base for c in args.damaged], "custom")]
        except InputError as exc:
            raise UsageError(f"--damaged: {exc}") from exc
    text = args.scenarios
    try:
        if text == "ds":
            return ds_scenarios(spec, seed, args.ds_levels)
        if text == "all":
            if not system.scenarios:
                raise UsageError("the system file defines no scenarios")
            return list(system.scenarios.values())
        if text.startswith("random:"):
            parts = text.split(":")
            if len(parts) != 3:
                raise UsageError("expected random:K[,K...]:COUNT")
            return generate_scenarios(spec, int(parts[2]), _int_list(parts[1]), seed)
        if Path(text).is_file():
            return parse_scenario_file(json.loads(Path(text).read_text()), spec)
    except (InputError, ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"--scenarios {text!r}: {exc}") from exc
    out = []
    for label in text.split(","):
        if label not in system.scenarios:
            known = ", ".join(system.scenarios) or "none"
            raise UsageError(f"unknown scenario {label!r}; system scenarios: {known}; or use all, ds, random:K:COUNT, a file")
        out.append(system.scenarios[label])
    return out


def _train_config(args: argparse.Namespace, system: SystemFile) -> TrainConfig:
    preset = args.preset
    if preset == "auto":
        preset = "mimo" if system.spec.name == "mimo" else "substation"
    base = mimo_defaults() if preset == "mimo" else substation_defaults()
    overrides: dict[str, Any] = {}
    for flag, name in (
        ("algo", "algorithm"),
        ("episodes", "episodes"),
        ("resource_units", "resource_units"),
        ("eps_start", "eps_start"),
        ("eps_end", "eps_end"),
        ("eps_decay", "eps_decay"),
        ("replay_capacity", "replay_capacity"),
        ("batch_size", "batch_size"),
        ("gamma", "gamma"),
        ("lr", "learning_rate"),
        ("target_sync", "target_sync"),
        ("hidden", "hidden_layers"),
        ("normalization", "normalization"),
        ("exploitation", "exploitation"),
        ("reward_scale", "reward_scale"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    if args.scenario_policy is not None:
        overrides["scenario_policy"] = parse_scenario_policy(args.scenario_policy)
    try:
        return replace(base, seed=args.seed, **overrides)
    except InputError as exc:
        raise UsageError(str(exc)) from exc


def _ga_config(args: argparse.Namespace) -> GaConfig:
    if args.ga_seeds < 1:
        raise UsageError("--ga-seeds must be >= 1")
    try:
        return GaConfig(args.population, args.generations, args.crossover, args.mutation, args.tournament, args.elites, args.seed)
    except InputError as exc:
        raise UsageError(str(exc)) from exc


def _load_checkpoint(path: str) -> Checkpoint:
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path!r} does not exist")
    return Checkpoint.load(path)


# ----------------------------------------------------------------- run directories


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def make_run_dir(out: str | None, seed: int) -> Path:
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path
    root = Path(os.environ.get(RUNS_ENV, "runs"))
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    path = root / f"{stamp}-{seed}"
    suffix = 1
    while path.exists():
        path = root / f"{stamp}-{seed}.{suffix}"
        suffix += 1
    path.mkdir(parents=True)
    return path


class Run:
    """A run directory with its manifest, rewritten as artifacts are added."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str], system: SystemFile | None, config: dict[str, Any]):
        self.dir = make_run_dir(args.out, args.seed)
        args.run = self
        self.manifest: dict[str, Any] = {
            "version": __version__,
            "command": args.command,
            "argv": list(argv),
            "seed": args.seed,
            "config": config,
            "system": None
            if system is None
            else {"name": system.spec.name, "source": args.system, "sha256": system.sha256},
            "artifacts": {},
            "started_at": _now(),
            "finished_at": None,
            "status": "running",
        }
        self.save()

    def path(self, name: str) -> Path:
        return self.dir / name

    def add(self, key: str, path: Path) -> None:
        self.manifest["artifacts"][key] = str(path.relative_to(self.dir))

    def finish(self, status: str, error: str = "") -> None:
        self.manifest["finished_at"] = _now()
        self.manifest["status"] = status
        if error:
            self.manifest["error"] = error
        self.save()

    def save(self) -> None:
        (self.dir / MANIFEST).write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")


def _scenario_labels(scenarios: Sequence[DamageScenario], base: int) -> list[dict[str, Any]]:
    return [{"label": s.label, "damaged": [c + base for c in s.damaged]} for s in scenarios]


def _check_unique(scenarios: Sequence[DamageScenario]) -> None:
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise UsageError("scenario labels must be unique")


# ----------------------------------------------------------------- commands


def cmd_train(args, argv) -> int:
    system = _resolve_system(args.system)
    config = _train_config(args, system)
    run = Run(args, argv, system, config.to_dict())
    env = RecoveryEnv(system.spec, system.model, config.resource_units)
    checkpoint, log = train(env, config, progress_every=args.progress_every)
    ck_path = run.path("checkpoint.npz")
    checkpoint.save(ck_path)
    run.add("checkpoint", ck_path)
    for key, text in (("episodes", log.episode_csv()), ("losses", log.loss_csv())):
        p = run.path(f"{key}.csv")
        p.write_text(text)
        run.add(key, p)
    summary = {
        "best_episode": log.best_episode,
        "best_lor": log.best_lor,
        "steps": log.steps,
        "seconds": log.seconds,
        "invalid_actions": 0,
        "env_steps": env.steps_executed,
    }
    p = run.path("train_summary.json")
    p.write_text(json.dumps(summary, indent=2) + "\n")
    run.add("summary", p)
    run.finish("ok")
    print(f"best greedy LoR {log.best_lor} at episode {log.best_episode}; {log.seconds:.1f} s; run dir {run.dir}")
    return 0


def _emit_report(run: Run, report: ComparisonReport) -> None:
    for key, path in write_report(report, run.dir).items():
        run.add(key, path)
    sys.stdout.write(report.summary_text())


def cmd_rollout(args, argv) -> int:
    system = _resolve_system(args.system)
    scenarios = _resolve_scenarios(args, system)
    _check_unique(scenarios)
    checkpoint = _load_checkpoint(args.checkpoint)
    check_dimensions(checkpoint, system.spec)
    config = {"checkpoint": args.checkpoint, "scenarios": _scenario_labels(scenarios, system.index_base)}
    run = Run(args, argv, system, config)
    env = RecoveryEnv(system.spec, system.model, checkpoint.resource_units)
    report = compare(env, scenarios, checkpoint, ga_seeds=(), max_enum=None)
    report.index_base = system.index_base
    _emit_report(run, report)
    run.finish("ok" if all(r.ok for r in report.rows) else "partial")
    return 0 if all(r.ok for r in report.rows) else 1


def cmd_enumerate(args, argv) -> int:
    system = _resolve_system(args.system)
    scenarios = _resolve_scenarios(args, system)
    _check_unique(scenarios)
    config = {"max_enum": args.max_enum, "scenarios": _scenario_labels(scenarios, system.index_base)}
    for sc in scenarios:
        if len(sc.damaged) > args.max_enum:
            raise ComplexityError(
                f"scenario {sc.label!r} has {len(sc.damaged)} damaged components; "
                f"enumeration is limited to {args.max_enum} (raise --max-enum)"
            )
    run = Run(args, argv, system, config)
    env = RecoveryEnv(system.spec, system.model)
    report = ComparisonReport(index_base=system.index_base)
    all_lines = ["scenario,curve,time,functionality"]
    for sc in scenarios:
        best, curves = enumerate_optimal(env, sc, args.max_enum)
        report.rows.append(MethodRow("enum", sc.label, best.lor, 0.0, best.order, best.curve))
        for i, c in enumerate(curves):
            all_lines.extend(f"{sc.label},{i},{t!r},{f!r}" for t, f in c.points)
    _emit_report(run, report)
    p = run.path("all_curves.csv")
    p.write_text("\n".join(all_lines) + "\n")
    run.add("all_curves", p)
    run.finish("ok")
    for r in report.rows:
        print(f"{r.scenario}: optimal LoR {r.lor!r} order ({', '.join(str(c + system.index_base) for c in r.sequence)})")
    return 0


def cmd_ga(args, argv) -> int:
    system = _resolve_system(args.system)
    scenarios = _resolve_scenarios(args, system)
    _check_unique(scenarios)
    ga = _ga_config(args)
    seeds = [args.seed + i for i in range(args.ga_seeds)]
    config = {"ga": asdict(ga), "ga_seeds": seeds, "scenarios": _scenario_labels(scenarios, system.index_base)}
    run = Run(args, argv, system, config)
    env = RecoveryEnv(system.spec, system.model)
    report = ComparisonReport(index_base=system.index_base)
    history = ["scenario,seed,generation,best_lor"]
    for sc in scenarios:
        best = None
        started = time.perf_counter()
        for s in seeds:
            sol = ga_optimize(env, sc, replace(ga, seed=s))
            history.extend(f"{sc.label},{s},{g},{v!r}" for g, v in enumerate(sol.history))
            if best is None or sol.lor < best.lor:
                best = sol
        report.rows.append(MethodRow("ga", sc.label, best.lor, time.perf_counter() - started, best.order, best.curve))
    _emit_report(run, report)
    p = run.path("ga_history.csv")
    p.write_text("\n".join(history) + "\n")
    run.add("ga_history", p)
    run.finish("ok")
    return 0


def cmd_compare(args, argv) -> int:
    system = _resolve_system(args.system)
    scenarios = _resolve_scenarios(args, system)
    _check_unique(scenarios)
    ga = _ga_config(args)
    seeds = [args.seed + i for i in range(args.ga_seeds)]
    checkpoint = _load_checkpoint(args.checkpoint) if args.checkpoint else None
    if checkpoint is not None:
        check_dimensions(checkpoint, system.spec)
    config = {
        "ga": asdict(ga),
        "ga_seeds": seeds,
        "max_enum": args.max_enum,
        "checkpoint": args.checkpoint,
        "random_baseline": args.random_baseline,
        "scenarios": _scenario_labels(scenarios, system.index_base),
    }
    run = Run(args, argv, system, config)
    env = RecoveryEnv(system.spec, system.model, checkpoint.resource_units if checkpoint else 1)
    report = compare(
        env,
        scenarios,
        checkpoint,
        ga,
        seeds,
        args.max_enum,
        random_seed=args.seed if args.random_baseline else None,
    )
    report.index_base = system.index_base
    _emit_report(run, report)
    run.finish("ok")
    return 0


def cmd_crosstest(args, argv) -> int:
    system = _resolve_system(args.system)
    scenarios = _resolve_scenarios(args, system)
    _check_unique(scenarios)
    paths: dict[str, str] = {}
    for item in args.checkpoints:
        name, sep, path = item.partition("=")
        if not sep or not name:
            raise UsageError(f"--checkpoints expects NAME=PATH, got {item!r}")
        paths[name] = path
    checkpoints = {name: _load_checkpoint(p) for name, p in paths.items()}
    config = {"checkpoints": paths, "scenarios": _scenario_labels(scenarios, system.index_base)}
    run = Run(args, argv, system, config)
    units = {ck.resource_units for ck in checkpoints.values()}
    if len(units) != 1:
        raise InputError("checkpoints disagree on resource units")
    env = RecoveryEnv(system.spec, system.model, units.pop())
    result = cross_test(checkpoints, env, scenarios)
    p = run.path("matrix.csv")
    p.write_text(result.matrix_csv())
    run.add("matrix", p)
    report = ComparisonReport(result.rows, system.index_base)
    p = run.path("report.csv")
    p.write_text(report.rows_csv())
    run.add("report", p)
    write_curves(result.rows, run.path("curves"))
    run.add("curves", run.path("curves"))
    run.finish("ok")
    sys.stdout.write(result.matrix_csv())
    return 0


def cmd_genscenarios(args, argv) -> int:
    system = _resolve_system(args.system)
    if args.count < 1 or not args.k:
        raise UsageError("--count must be >= 1 and --k nonempty")
    if any(not 0 < k <= system.spec.component_count for k in args.k):
        raise UsageError(f"--k values must lie in 1..{system.spec.component_count}")
    run = Run(args, argv, system, {"k": args.k, "count": args.count})
    scenarios = generate_scenarios(system.spec, args.count, args.k, args.seed)
    doc = scenarios_to_dict(scenarios, system.spec.name, system.index_base, seed=args.seed, k=args.k)
    p = run.path("scenarios.json")
    p.write_text(json.dumps(doc, indent=2) + "\n")
    run.add("scenarios", p)
    run.finish("ok")
    print(p)
    return 0


def cmd_rerun(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    old = list(manifest["argv"])
    new_argv = []
    skip = False
    for tok in old:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        new_argv.append(tok)
    if args.out:
        new_argv += ["--out", args.out]
    system = manifest.get("system")
    if system:
        current = load_system(system["source"]).sha256
        if current != system["sha256"]:
            raise InputError(f"system file {system['source']!r} changed since the original run")
    return main(new_argv)


COMMANDS = {
    "train": cmd_train,
    "rollout": cmd_rollout,
    "enumerate": cmd_enumerate,
    "ga": cmd_ga,
    "compare": cmd_compare,
    "crosstest": cmd_crosstest,
    "genscenarios": cmd_genscenarios,
    "rerun": cmd_rerun,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"repairseq {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ComplexityError, ContractViolation, ResourceError, TrainingAborted, OSError) as exc:
        run = getattr(args, "run", None)
        if run is not None:
            run.finish("failed", f"{type(exc).__name__}: {exc}")
        print(f"repairseq {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
