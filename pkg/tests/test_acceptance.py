"""Acceptance criteria 1-10.

Each test prints and records one ``CRITERION <n>: PASS|FAIL`` line; the
lines are repeated in the pytest terminal summary.  Run directly with
``python3 tests/test_acceptance.py`` for the same lines without pytest.

``REPAIRSEQ_ACCEPT_EPISODES`` sets the substation training length used by
criterion 7 (default 2000).
"""

from __future__ import annotations

import itertools
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from repairseq.agents import Checkpoint, greedy_rollout, mimo_defaults, substation_defaults, train
from repairseq.baselines import GaConfig, enumerate_optimal, ga_optimize, random_sequence
from repairseq.env import DamageScenario, RecoveryEnv, sample_scenario, RandomK, WorstCase
from repairseq.evaluation import generate_scenarios, rollout
from repairseq.fixtures import load_fixture
from repairseq.neural import MlpConfig, QNetwork, forward, loss_and_grads, state_value
from repairseq.network import reachability

RESULTS: dict[int, str] = {}
AUDIT = {"steps": 0, "invalid": 0, "envs": 0}
SUBSTATION_EPISODES = int(os.environ.get("REPAIRSEQ_ACCEPT_EPISODES", "2000"))
ALGORITHM_EPISODES = 300


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line, flush=True)


class AuditedEnv(RecoveryEnv):
    """Counts every attempted step and every attempt naming a non-damaged component."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        AUDIT["envs"] += 1

    def step(self, actions):
        acts = [int(actions)] if np.isscalar(actions) else [int(a) for a in actions]
        AUDIT["steps"] += 1
        if self.state is None or any(not 0 <= a < self.spec.component_count or self.state[a] != 0 for a in acts):
            AUDIT["invalid"] += 1
        return super().step(actions)


# ---------------------------------------------------------------- 1


def test_criterion_1_mimo_exact_match():
    spec, model = load_fixture("mimo")
    env = AuditedEnv(spec, model)
    worst = DamageScenario(spec.all_damaged(), "worst")
    subs = [s for s in itertools.product([0, 1], repeat=5) if 0 < sum(s) < 5]
    rng = np.random.default_rng(0)
    drawn = [DamageScenario(np.array(subs[i], dtype=np.int8), f"sub{i}") for i in sorted(rng.choice(len(subs), 10, replace=False))]
    optimum = {sc.label: enumerate_optimal(env, sc)[0].lor for sc in [worst] + drawn}
    every = [DamageScenario(np.array(s, dtype=np.int8)) for s in subs]
    every_opt = [enumerate_optimal(env, sc)[0].lor for sc in every]

    started = time.perf_counter()
    attempts = []
    passed_seed = None
    for seed in range(5):
        ck, _ = train(env, mimo_defaults(seed=seed))
        misses = [sc.label for sc in [worst] + drawn if rollout(ck, env, sc).lor != optimum[sc.label]]
        all_misses = sum(rollout(ck, env, sc).lor != o for sc, o in zip(every, every_opt))
        attempts.append(f"seed {seed}: {len(misses)} misses on worst+10 ({all_misses}/30 over all sub-scenarios)")
        if not misses:
            passed_seed = seed
            break
    elapsed = time.perf_counter() - started
    ok = passed_seed is not None and elapsed < 120
    record(1, ok, "; ".join(attempts) + f"; {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_telescoping():
    rng = np.random.default_rng(2)
    fixtures = {name: load_fixture(name) for name in ("mimo", "substation")}
    envs = {(name, u): AuditedEnv(*fx, resource_units=u) for name, fx in fixtures.items() for u in (1, 2, 3)}
    worst_err = 0.0
    for _ in range(1000):
        name = "mimo" if rng.random() < 0.3 else "substation"
        u = int(rng.integers(1, 4))
        env = envs[(name, u)]
        n = env.spec.component_count
        k = int(rng.integers(1, n + 1))
        sc = sample_scenario(env.spec, RandomK(k), rng)
        order = list(rng.permutation(sc.damaged))
        env.reset(sc)
        i = 0
        while not env.done:
            env.step(order[i : i + u])
            i += u
        rec = env.record()
        total = sum(r * e for r, e in zip(rec.rewards, rec.elapsed))
        worst_err = max(worst_err, abs(total - (env.f0 - env.f_d)))
    ok = worst_err <= 1e-9
    record(2, ok, f"1000 triples, max |sum(r*dt) - (F0 - Fd)| = {worst_err:.3g}")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_gradient_oracle():
    rng = np.random.default_rng(3)
    h = 1e-5
    worst = 0.0
    for i in range(50):
        cfg = MlpConfig(
            input_dim=int(rng.integers(1, 7)),
            output_dim=int(rng.integers(1, 6)),
            hidden_layers=tuple(int(w) for w in rng.choice([2, 4, 8, 16], size=int(rng.integers(1, 4)))),
            head=["plain", "dueling"][i % 2],
            normalization=bool((i // 2) % 2),
            seed=i,
        )
        net = QNetwork.create(cfg)
        for k in net.params:
            net.params[k] = net.params[k] + rng.normal(0, 0.2, net.params[k].shape)
        batch = int(rng.integers(1, 6))
        x = rng.normal(size=(batch, cfg.input_dim))
        a = rng.integers(0, cfg.output_dim, batch)
        y = rng.normal(size=batch)
        _, grads = loss_and_grads(net, x, a, y)
        for key, g in grads.items():
            p = net.params[key]
            for idx in np.ndindex(g.shape):
                old = p[idx]
                p[idx] = old + h
                up, _ = loss_and_grads(net, x, a, y)
                p[idx] = old - h
                down, _ = loss_and_grads(net, x, a, y)
                p[idx] = old
                fd = (up - down) / (2 * h)
                # floor keeps exactly-zero gradients (inactive units) from dividing by zero
                rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6)
                worst = max(worst, rel)
    ok = worst <= 1e-4
    record(3, ok, f"50 networks, worst relative error {worst:.3g}")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_dueling_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(10):
        cfg = MlpConfig(8, 6, (16, 16), head="dueling", normalization=bool(i % 2), seed=i)
        net = QNetwork.create(cfg)
        for k in net.params:
            net.params[k] = net.params[k] + rng.normal(0, 0.5, net.params[k].shape)
        x = rng.normal(0, 3, size=(100, 8))
        worst = max(worst, float(np.abs(forward(net, x).mean(axis=1) - state_value(net, x)).max()))
    ok = worst <= 1e-9
    record(4, ok, f"1000 inputs, max |mean_a Q - V| = {worst:.3g}")
    assert ok


# ---------------------------------------------------------------- 5


def _dfs_closure(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    out = np.zeros((n, n), dtype=bool)
    for s in range(n):
        stack = [t for t in range(n) if adj[s, t]]
        seen = set(stack)
        while stack:
            v = stack.pop()
            out[s, v] = True
            for w in range(n):
                if adj[v, w] and w not in seen:
                    seen.add(w)
                    stack.append(w)
    return out


def test_criterion_5_reachability_oracle():
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(200):
        v = int(rng.integers(1, 11))
        adj = rng.random((v, v)) < rng.uniform(0.05, 0.5)
        mismatches += not np.array_equal(reachability(adj), _dfs_closure(adj))
    ok = mismatches == 0
    record(5, ok, f"200 digraphs, {mismatches} mismatching closures")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_baseline_ordering():
    started = time.perf_counter()
    rng = np.random.default_rng(6)
    cases = []
    mimo_env = AuditedEnv(*load_fixture("mimo"))
    sub_env = AuditedEnv(*load_fixture("substation"))
    mimo_subsets = [s for s in itertools.product([0, 1], repeat=5) if sum(s) < 4]
    for i in rng.choice(len(mimo_subsets), 10, replace=False):
        cases.append((mimo_env, DamageScenario(np.array(mimo_subsets[i], dtype=np.int8))))
    while len(cases) < 50:
        sc = sample_scenario(sub_env.spec, RandomK(int(rng.integers(2, 8))), rng)
        if sub_env.functionality(sc.initial_state) < sub_env.f0:
            cases.append((sub_env, sc))
    order_ok = hits = run_hits = 0
    for j, (env, sc) in enumerate(cases):
        opt = enumerate_optimal(env, sc)[0].lor
        runs = [ga_optimize(env, sc, GaConfig(seed=s)).lor for s in range(3)]
        ga = min(runs)
        rnd = random_sequence(env, sc, seed=j).lor
        order_ok += opt <= ga <= rnd
        hits += ga == opt
        run_hits += sum(r == opt for r in runs)
    elapsed = time.perf_counter() - started
    ok = order_ok == 50 and hits >= 45 and elapsed < 300
    record(
        6, ok,
        f"ordering held on {order_ok}/50; GA (best of 3 seeds) optimal on {hits}/50, "
        f"single runs {run_hits}/150; {elapsed:.0f} s",
    )
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_substation_comparison():
    spec, model = load_fixture("substation")
    env = AuditedEnv(spec, model)
    cfg = substation_defaults(episodes=SUBSTATION_EPISODES, seed=0)
    t0 = time.perf_counter()
    ck, log = train(env, cfg)
    train_s = time.perf_counter() - t0
    scenarios = generate_scenarios(spec, 20, [8, 16, 32, 40], seed=7)
    wins = 0
    drl_times, ga_times, rows = [], [], []
    for sc in scenarios:
        t = time.perf_counter()
        drl = rollout(ck, env, sc).lor
        drl_times.append(time.perf_counter() - t)
        t = time.perf_counter()
        ga = min(ga_optimize(env, sc, GaConfig(seed=s)).lor for s in range(10))
        ga_times.append(time.perf_counter() - t)
        wins += drl <= ga
        rows.append(f"{sc.label}:{drl:.0f}/{ga:.0f}")
    frac = wins / len(scenarios)
    timing_ok = max(drl_times) < 1.0 and all(g > 10 * d for g, d in zip(ga_times, drl_times))
    ok = frac >= 0.8 and timing_ok
    record(
        7, ok,
        f"DRL <= GA on {wins}/20 ({frac:.2f}); mean DRL {np.mean(drl_times) * 1e3:.1f} ms vs GA {np.mean(ga_times):.1f} s; "
        f"{SUBSTATION_EPISODES} episodes in {train_s:.0f} s; DRL/GA LoR " + " ".join(rows),
    )
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_algorithm_harness(tmp_path):
    spec, model = load_fixture("substation")
    worst = sample_scenario(spec, WorstCase())
    lines, ok = [], True
    for algo in ("dqn", "ddqn", "duel-dqn", "duel-ddqn"):
        env = AuditedEnv(spec, model)
        cfg = substation_defaults(algorithm=algo, episodes=ALGORITHM_EPISODES, seed=0)
        t = time.perf_counter()
        ck, log = train(env, cfg)
        seconds = time.perf_counter() - t
        path = tmp_path / f"{algo}.npz"
        ck.save(path)
        replayed = greedy_rollout(Checkpoint.load(path).net, env, worst).lor
        complete = len(log.episode_lor) == ALGORITHM_EPISODES
        ok &= complete and replayed == log.best_lor
        lines.append(f"{algo} best {log.best_lor:.0f} @ep{log.best_episode} replay {replayed:.0f} {seconds:.0f}s")
    record(8, ok, f"{ALGORITHM_EPISODES} episodes each; " + "; ".join(lines))
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_9_determinism(tmp_path):
    from repairseq.cli import main

    ck_dir = tmp_path / "train_a"
    commands = {
        "train": ["train", "--system", "mimo", "--episodes", "80", "--seed", "3"],
        "train_sub": ["train", "--system", "substation", "--episodes", "5", "--seed", "3"],
        "rollout": ["rollout", "--system", "mimo", "--checkpoint", str(ck_dir / "checkpoint.npz"), "--scenarios", "all"],
        "enumerate": ["enumerate", "--system", "mimo", "--scenarios", "all"],
        "ga": ["ga", "--system", "substation", "--scenarios", "random:6,10:3", "--ga-seeds", "2", "--generations", "20"],
        "compare": ["compare", "--system", "mimo", "--checkpoint", str(ck_dir / "checkpoint.npz"), "--scenarios",
                    "random:2,3,4:5", "--ga-seeds", "2", "--generations", "20", "--random-baseline"],
        "crosstest": ["crosstest", "--system", "mimo", "--checkpoints", f"m={ck_dir / 'checkpoint.npz'}", "--ds-levels", "2,3,5"],
        "genscenarios": ["genscenarios", "--system", "substation", "--k", "16", "--count", "100", "--seed", "3"],
    }
    differing, failed = [], []
    for name, args in commands.items():
        out_a = ck_dir if name == "train" else tmp_path / f"{name}_a"
        out_b = tmp_path / f"{name}_b"
        codes = (main(args + ["--out", str(out_a)]), main(["rerun", str(out_a / "manifest.json"), "--out", str(out_b)]))
        if codes != (0, 0):
            failed.append(f"{name}{codes}")
            continue
        files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.suffix in (".csv", ".npz") or p.name == "scenarios.json")
        files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.suffix in (".csv", ".npz") or p.name == "scenarios.json")
        if files_a != files_b or any((out_a / f).read_bytes() != (out_b / f).read_bytes() for f in files_a):
            differing.append(name)
    ok = not differing and not failed
    record(9, ok, f"{len(commands)} commands rerun from manifests; differing {differing or 'none'}; failed {failed or 'none'}")
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_masking_safety():
    if AUDIT["steps"] == 0:
        # run in isolation: exercise training and rollouts on both fixtures
        for name, cfg in (("mimo", mimo_defaults(episodes=100)), ("substation", substation_defaults(episodes=20))):
            spec, model = load_fixture(name)
            env = AuditedEnv(spec, model)
            ck, _ = train(env, cfg)
            for sc in generate_scenarios(spec, 10, [1, spec.component_count], seed=1):
                rollout(ck, env, sc)
    ok = AUDIT["invalid"] == 0 and AUDIT["steps"] > 0
    record(10, ok, f"{AUDIT['steps']} audited environment steps in {AUDIT['envs']} environments, {AUDIT['invalid']} invalid")
    assert ok


if __name__ == "__main__":
    import tempfile

    failures = 0
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    tests.sort(key=lambda f: int(f.__name__.split("_")[2]))
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    print("\n".join(RESULTS[k] for k in sorted(RESULTS)))
    sys.exit(1 if failures else 0)
