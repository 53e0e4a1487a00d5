import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lora_alloc.agent import (
    AgentConfig, DRLAgent, Experience, InsufficientExperience, ReplayBuffer, RewardWeights, encode_state, epsilon,
    greedy, power_reward, reward, select_action, td_target,
)
from lora_alloc.nn import QNetwork

from bandit import optimal_fraction, train_bandit
from frozen import REWARD_EXAMPLE


class FixedQ:
    """Stands in for a network with constant outputs."""

    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)
        self.action_count = len(self.q)

    def forward(self, x):
        x = np.asarray(x)
        return np.tile(self.q, (x.shape[0], 1)) if x.ndim == 2 else self.q.copy()


def exp(s=None, a=0, r=0.0, terminal=False):
    s = np.zeros(3) if s is None else s
    return Experience(s, a, r, s, terminal)


def test_encode_state_examples():
    st_ = encode_state([3, 1, 0, 0], 4500, 4500)
    assert st_.action_fractions.tolist() == [0.75, 0.25, 0.0, 0.0]
    assert st_.distance_norm == 1.0
    empty = encode_state([0, 0, 0], 0, 4500)
    assert empty.action_fractions.tolist() == [0, 0, 0] and empty.distance_norm == 0.0
    assert encode_state([1, 0], 9000, 4500).distance_norm == 1.0
    with pytest.raises(ValueError):
        encode_state([-1, 2], 10, 4500)


@given(st.lists(st.integers(0, 50), min_size=2, max_size=8), st.randoms(use_true_random=False))
def test_encode_state_equivariant(counts, rnd):
    perm = list(range(len(counts)))
    rnd.shuffle(perm)
    a = encode_state(counts, 100, 4500).action_fractions
    b = encode_state([counts[i] for i in perm], 100, 4500).action_fractions
    assert np.allclose(a[perm], b)
    if sum(counts):
        assert a.sum() == pytest.approx(1.0)


def test_epsilon_schedule_examples():
    cfg = AgentConfig()
    assert epsilon(0, cfg) == 1.0
    assert epsilon(10_000, cfg) == pytest.approx(0.5)
    assert epsilon(19_000, cfg) == pytest.approx(0.05)
    assert epsilon(10**7, cfg) == 0.05


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_epsilon_nonincreasing_and_bounded(a, b):
    cfg = AgentConfig()
    lo, hi = sorted((a, b))
    assert cfg.eps_final <= epsilon(hi, cfg) <= epsilon(lo, cfg) <= cfg.eps_initial


def test_select_action_examples():
    net = FixedQ([0.1, 0.9, 0.3])
    assert select_action(np.zeros(2), net, 0.0) == 1
    assert select_action(np.zeros(2), net, 0.0, mask={0, 2}) == 2
    with pytest.raises(ValueError, match="empty mask"):
        select_action(np.zeros(2), net, 0.0, mask=set())


def test_greedy_ties_lowest_index():
    assert greedy(np.array([1.0, 3.0, 3.0])) == 1
    assert greedy(np.array([1.0, 3.0, 3.0]), mask={2, 1}) == 1


def test_select_action_uniform_under_full_exploration():
    rng = np.random.default_rng(0)
    net = FixedQ(np.zeros(6))
    mask = {0, 2, 3, 5}
    draws = [select_action(np.zeros(2), net, 1.0, mask, rng) for _ in range(10_000)]
    counts = np.array([draws.count(a) for a in sorted(mask)])
    chi2 = float(((counts - 2500) ** 2 / 2500).sum())
    assert set(draws) == mask
    assert chi2 < 16.27  # 3 dof, p = 0.001


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=10), st.floats(-10, 10), st.floats(0.01, 10))
def test_greedy_affine_invariance(q, c, k):
    q = np.array(q)
    assert greedy(q) == greedy(q + c) or np.isclose(np.sort(q)[-1], np.sort(q)[-2])
    assert greedy(q) == greedy(q * k)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.sets(st.integers(0, 3), min_size=1),
       st.floats(0, 1))
def test_masked_choice_in_mask(q, mask, eps):
    a = select_action(np.zeros(1), FixedQ(q), eps, mask, np.random.default_rng(1))
    assert a in mask


def test_power_reward_boundaries():
    assert power_reward(2, 2, 20) == 1.0
    assert power_reward(20, 2, 20) == 0.0
    assert power_reward(14, 2, 20) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        power_reward(21, 2, 20)
    with pytest.raises(ValueError):
        power_reward(5, 20, 2)


def test_reward_example():
    r = reward(0.9, 0.097536, 2, 2, 20, RewardWeights(), power_term_enabled=True)
    assert r == pytest.approx(REWARD_EXAMPLE, abs=1e-12)
    assert reward(0.9, 0.097536, 2, 2, 20, RewardWeights()) == pytest.approx(0.9 - 0.00097536)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 3), st.floats(2, 20))
def test_reward_monotone(p1, p2, air, power):
    w = RewardWeights()
    lo, hi = sorted((p1, p2))
    assert reward(hi, air, power, 2, 20, w, True) >= reward(lo, air, power, 2, 20, w, True)
    assert reward(hi, air + 0.5, power, 2, 20, w, True) <= reward(hi, air, power, 2, 20, w, True)
    assert reward(hi, air, min(power + 1, 20), 2, 20, w, True) <= reward(hi, air, power, 2, 20, w, True)


def test_reward_weights_nonnegative():
    with pytest.raises(ValueError):
        RewardWeights(beta=-0.1)


def test_experience_rejects_nonfinite_reward():
    with pytest.raises(ValueError):
        exp(r=float("nan"))


def test_replay_ring_semantics():
    buf = ReplayBuffer(30_000, 1)
    for i in range(30_001):
        buf.push(Experience(np.array([float(i)]), 0, float(i), np.array([0.0])))
    assert len(buf) == 30_000
    assert buf.oldest().r == 1.0
    assert 0.0 not in set(buf.r.tolist())


@given(st.integers(1, 50), st.integers(1, 120))
def test_replay_size_bounded(capacity, pushes):
    buf = ReplayBuffer(capacity, 1)
    for i in range(pushes):
        buf.push(Experience(np.zeros(1), 0, float(i), np.zeros(1)))
    assert len(buf) == min(capacity, pushes)
    assert buf.oldest().r == max(0, pushes - capacity)


def test_replay_sampling():
    buf = ReplayBuffer(100, 1, np.random.default_rng(0))
    with pytest.raises(InsufficientExperience):
        buf.sample(10)
    for i in range(100):
        buf.push(Experience(np.zeros(1), 0, float(i), np.zeros(1)))
    idx = buf.sample_indices(50)
    assert len(set(idx.tolist())) == 50
    freq = np.zeros(100)
    for _ in range(2000):
        freq[buf.sample_indices(50)] += 1  # 10^5 draws
    chi2 = float(((freq - 1000) ** 2 / 1000).sum())
    assert chi2 < 148.2  # 99 dof, p = 0.001


def test_td_target_examples():
    s = np.zeros(2)
    target = FixedQ([0.5, 1.0])
    online = FixedQ([2.0, 0.0])
    assert td_target(1.0, s, False, online, target, AgentConfig(discount=0.0)) == 1.0
    assert td_target(1.0, s, False, online, target, AgentConfig(target_rule="literal_alg1")) == pytest.approx(1.7)
    assert td_target(1.0, s, False, online, target, AgentConfig()) == pytest.approx(1.35)
    assert td_target(1.0, s, True, online, target, AgentConfig()) == 1.0
    zero = QNetwork([2, 3, 2], init="zeros")
    assert td_target(0.4, s, False, zero, zero, AgentConfig()) == pytest.approx(0.4)


def test_agent_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(eps_final=0.5, eps_initial=0.2)
    with pytest.raises(ValueError):
        AgentConfig(discount=1.0)
    with pytest.raises(ValueError):
        AgentConfig(target_rule="vanilla")


def test_agent_warmup_and_sync():
    cfg = AgentConfig(warmup=200, batch_size=32, target_update_interval=300, memory_capacity=1000)
    agent = DRLAgent(3, 2, cfg, seed=0)
    losses = [agent.step(exp(np.ones(3), a=i % 2, r=1.0)) for i in range(300)]
    assert all(loss is None for loss in losses[:199])
    assert losses[199] is not None
    assert agent.syncs == 1
    assert all(np.array_equal(p, q) for p, q in zip(agent.online.params(), agent.target.params()))


def test_agent_save_load(tmp_path):
    agent = DRLAgent(3, 2, seed=4)
    path = tmp_path / "a.qnet"
    agent.save(path)
    other = DRLAgent(3, 2, seed=5)
    other.load(path)
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(agent.online.forward(x), other.online.forward(x))
    assert np.array_equal(other.target.forward(x), other.online.forward(x))


def test_bandit_learns_optimum_one_seed():
    assert optimal_fraction(train_bandit(0)) >= 0.95
