import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from repairseq.agents import (
    Checkpoint,
    ReplayBuffer,
    TrainConfig,
    compute_targets,
    encode_state,
    epsilon,
    greedy_rollout,
    mimo_defaults,
    parse_scenario_policy,
    roulette_probabilities,
    select_actions,
    substation_defaults,
    train,
)
from repairseq.env import DamageScenario, RandomK, RecoveryEnv, WorstCase
from repairseq.errors import ContractViolation, InputError
from repairseq.neural import MlpConfig, QNetwork, forward


def test_presets():
    m = mimo_defaults()
    assert (m.eps_start, m.eps_end, m.eps_decay) == (0.9, 0.05, 100)
    assert (m.replay_capacity, m.batch_size, m.gamma, m.learning_rate, m.target_sync, m.episodes) == (
        10_000, 256, 0.95, 1e-3, 50, 500,
    )
    assert m.hidden_layers == (32,) and m.algorithm == "dqn" and m.exploitation == "greedy"
    s = substation_defaults()
    assert (s.eps_start, s.eps_end, s.eps_decay) == (1.0, 0.001, 1000)
    assert (s.replay_capacity, s.batch_size, s.gamma, s.learning_rate, s.target_sync, s.episodes) == (
        100_000, 128, 0.95, 1e-4, 100, 10_000,
    )
    assert s.hidden_layers == (128, 128) and s.normalization and s.exploitation == "roulette"
    assert s.double and not s.head == "dueling"
    assert substation_defaults(algorithm="duel-ddqn").head == "dueling"


@pytest.mark.parametrize(
    "kw",
    [
        dict(algorithm="a2c"),
        dict(eps_start=0.1, eps_end=0.5),
        dict(batch_size=20_000),
        dict(gamma=1.5),
        dict(exploitation="softmax"),
        dict(target_sync=0),
        dict(learning_rate=0.0),
    ],
)
def test_config_validation(kw):
    with pytest.raises(InputError):
        TrainConfig(**kw)


def test_epsilon_schedule():
    cfg = mimo_defaults()
    assert epsilon(0, cfg) == 0.9
    assert epsilon(50, cfg) == pytest.approx(0.475)
    assert epsilon(100, cfg) == pytest.approx(0.05)
    assert epsilon(400, cfg) == 0.05
    with pytest.raises(InputError):
        epsilon(-1, cfg)


def test_parse_scenario_policy():
    assert parse_scenario_policy("worst") == WorstCase()
    assert parse_scenario_policy("random16") == RandomK(16)
    assert parse_scenario_policy("k8") == RandomK(8)
    with pytest.raises(InputError):
        parse_scenario_policy("many")


def test_encode_state():
    s = np.array([1, 0, 1], dtype=np.int8)
    assert encode_state(s, 1).tolist() == [1.0, 0.0, 1.0]
    assert encode_state(s, 3).tolist() == [1.0, 0.0, 1.0, 3.0]


def test_greedy_tie_break_and_masking():
    q = np.array([5.0, 9.0, 9.0, 9.0])
    mask = np.array([True, False, True, True])
    assert select_actions(q, mask, 1, "greedy") == [2]
    assert select_actions(q, mask, 2, "greedy") == [2, 3]
    assert select_actions(q, mask, 10, "greedy") == [2, 3, 0]
    with pytest.raises(ContractViolation):
        select_actions(q, np.zeros(4, dtype=bool), 1, "greedy")
    with pytest.raises(InputError):
        select_actions(q, mask, 1, "roulette")


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12),
    st.data(),
    st.integers(1, 4),
    st.sampled_from(["greedy", "random", "roulette"]),
)
def test_selection_only_returns_valid_distinct_actions(q, data, u, rule):
    n = len(q)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    if not mask.any():
        mask[data.draw(st.integers(0, n - 1))] = True
    acts = select_actions(np.array(q), mask, u, rule, np.random.default_rng(0))
    assert len(acts) == min(u, int(mask.sum()))
    assert len(set(acts)) == len(acts)
    assert all(mask[a] for a in acts)


def test_roulette_probabilities():
    assert roulette_probabilities(np.array([1.0, 3.0])).tolist() == [0.25, 0.75]
    p = roulette_probabilities(np.array([-2.0, 0.0, 2.0]))
    assert p[0] == pytest.approx(1e-6 / (1e-6 + 2 + 1e-6 + 4 + 1e-6))
    assert roulette_probabilities(np.zeros(4)).tolist() == [0.25] * 4
    assert roulette_probabilities(np.array([0.0, 2.0])).tolist() == [0.0, 1.0]


def test_roulette_frequencies_monte_carlo():
    q = np.array([1.0, 2.0, 0.5, 4.0, 3.0])
    mask = np.array([True, True, False, True, True])
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    trials = 20_000
    for _ in range(trials):
        counts[select_actions(q, mask, 1, "roulette", rng)[0]] += 1
    expected = np.array([1, 2, 0, 4, 3]) / 10
    assert counts[2] == 0
    assert np.allclose(counts / trials, expected, atol=0.015)


def test_replay_buffer_ring():
    buf = ReplayBuffer(3, 2, 2)
    for i in range(5):
        buf.add([i, i], i % 2, float(i), [i, i], [True, False], False)
    assert len(buf) == 3
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]
    batch = buf.sample(3, np.random.default_rng(0))
    assert sorted(batch["indices"].tolist()) == [0, 1, 2]
    with pytest.raises(InputError):
        buf.sample(4, np.random.default_rng(0))


def make_batch():
    return {
        "rewards": np.array([1.0, 2.0, 3.0]),
        "next_states": np.eye(3),
        "next_valid": np.array([[True, True, False], [False, False, False], [False, True, True]]),
        "dones": np.array([False, False, True]),
    }


def test_targets_terminal_and_masked_max():
    policy = QNetwork.create(MlpConfig(3, 3, (4,), seed=1))
    target = QNetwork.create(MlpConfig(3, 3, (4,), seed=2))
    batch = make_batch()
    y = compute_targets(batch, policy, target, 0.9, double=False)
    qt = forward(target, np.eye(3))
    assert y[0] == pytest.approx(1.0 + 0.9 * qt[0, :2].max())
    assert y[1] == 2.0
    assert y[2] == 3.0


def test_double_targets_use_policy_argmax():
    policy = QNetwork.create(MlpConfig(3, 3, (4,), seed=1))
    target = QNetwork.create(MlpConfig(3, 3, (4,), seed=2))
    batch = make_batch()
    y = compute_targets(batch, policy, target, 0.9, double=True)
    qp = forward(policy, np.eye(3))
    qt = forward(target, np.eye(3))
    a = int(np.argmax(qp[0, :2]))
    assert y[0] == pytest.approx(1.0 + 0.9 * qt[0, a])


def test_training_is_deterministic_and_masked(mimo_env):
    cfg = mimo_defaults(episodes=60, seed=3)
    ck1, log1 = train(mimo_env, cfg)
    ck2, log2 = train(mimo_env, cfg)
    assert log1.episode_csv() == log2.episode_csv()
    assert log1.loss_csv() == log2.loss_csv()
    for k in ck1.net.params:
        assert np.array_equal(ck1.net.params[k], ck2.net.params[k])
    assert log1.steps > 0 and len(log1.losses) > 0


def test_best_checkpoint_replays_to_logged_lor(mimo_env, mimo, tmp_path):
    spec, _ = mimo
    ck, log = train(mimo_env, mimo_defaults(episodes=80, seed=0))
    assert log.greedy_lor[log.best_episode] == log.best_lor == min(log.greedy_lor)
    ck.save(tmp_path / "c.npz")
    again = Checkpoint.load(tmp_path / "c.npz")
    rec = greedy_rollout(again.net, mimo_env, DamageScenario(spec.all_damaged()))
    assert rec.lor == log.best_lor == again.lor
    assert again.episode == log.best_episode


@pytest.mark.parametrize("algo", ["dqn", "ddqn", "duel-dqn", "duel-ddqn"])
def test_all_algorithms_run(mimo, algo):
    env = RecoveryEnv(*mimo, resource_units=2)
    cfg = mimo_defaults(algorithm=algo, episodes=30, resource_units=2, normalization=True,
                        exploitation="roulette", scenario_policy=RandomK(3), eval_scenarios=2)
    ck, log = train(env, cfg)
    assert ck.net.config.input_dim == 6
    assert len(log.episode_lor) == 30


def test_resource_mismatch_rejected(mimo_env):
    with pytest.raises(InputError):
        train(mimo_env, mimo_defaults(resource_units=2, episodes=1))
