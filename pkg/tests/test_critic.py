import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expo.critic import CriticEnsemble
from expo.errors import ConfigurationError, UsageError
from expo.replay import Batch
from helpers import param_gradcheck


def _critic(K=3, M=2, seed=0, **kw):
    return CriticEnsemble(2, 1, K=K, M=M, hidden=8, n_hidden=2, rng=np.random.default_rng(seed), **kw)


def _constant_members(params, values):
    """Make member k output values[k] everywhere (params: list of arrays)."""
    params[-2][...] = 0.0
    params[-1][...] = np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)


def _batch(r, done, n=None):
    r = np.asarray(r, dtype=np.float64)
    n = len(r)
    rng = np.random.default_rng(0)
    return Batch(rng.standard_normal((n, 2)), rng.uniform(-1, 1, (n, 1)), r,
                 rng.standard_normal((n, 2)), np.asarray(done, dtype=np.float64))


def test_mean_of_two_members():
    c = _critic(K=2, M=1)
    _constant_members(c.net.param_arrays(), [1.0, 3.0])
    np.testing.assert_allclose(c.q_mean(np.zeros((4, 2)), np.zeros((4, 1))), 2.0)


def test_identical_members_mean_equals_member():
    c = _critic(K=4)
    arrays = c.net.param_arrays()
    for a in arrays:
        a[...] = a[:1]
    s, a = np.random.default_rng(1).standard_normal((5, 2)), np.zeros((5, 1))
    np.testing.assert_allclose(c.q_mean(s, a), c.q_all(s, a)[2], rtol=1e-12)


def test_mean_within_member_range():
    c = _critic(K=5)
    s, a = np.random.default_rng(2).standard_normal((20, 2)), np.ones((20, 1))
    q, m = c.q_all(s, a), c.q_mean(s, a)
    assert np.all(m >= q.min(axis=0) - 1e-12) and np.all(m <= q.max(axis=0) + 1e-12)


def test_target_value_special_cases():
    s, a = np.random.default_rng(3).standard_normal((6, 2)), np.zeros((6, 1))
    single = _critic(K=1, M=1)
    np.testing.assert_array_equal(single.target_value(s, a, np.random.default_rng(0)),
                                  single.q_all(s, a, target=True)[0])
    full = _critic(K=4, M=4)
    np.testing.assert_array_equal(full.target_value(s, a, np.random.default_rng(0)),
                                  full.q_all(s, a, target=True).min(axis=0))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_random_subset_min_is_bounded(seed):
    c = _critic(K=10, M=2, seed=seed % 7)
    rng = np.random.default_rng(seed)
    s, a = rng.standard_normal((8, 2)), rng.uniform(-1, 1, (8, 1))
    q = c.q_all(s, a, target=True)
    v = c.target_value(s, a, rng)
    assert np.all(v >= q.min(axis=0)) and np.all(v <= q.max(axis=0))


def test_subset_larger_than_ensemble_is_rejected():
    with pytest.raises(ConfigurationError):
        _critic(K=2, M=3)


def _three_transition_critic():
    c = _critic(K=3, M=2, gamma=0.99)
    _constant_members(c.target_params, [2.0, 2.0, 2.0])
    return c


def test_hand_computed_targets():
    c = _three_transition_critic()
    b = _batch([0.0, 1.0, 0.5], [0, 1, 1])
    y = c.td_targets(b.r, b.done, b.s2, np.zeros((3, 1)), np.random.default_rng(0))
    np.testing.assert_allclose(y, [1.98, 1.0, 0.5], rtol=0, atol=1e-12)


def test_terminal_target_ignores_next_state():
    c = _critic(K=3, M=2)
    r, done = np.array([0.3, 1.0]), np.ones(2)
    rng = np.random.default_rng(0)
    y1 = c.td_targets(r, done, rng.standard_normal((2, 2)), rng.uniform(-1, 1, (2, 1)), rng)
    y2 = c.td_targets(r, done, 100 * rng.standard_normal((2, 2)), rng.uniform(-1, 1, (2, 1)), rng)
    np.testing.assert_array_equal(y1, r)
    np.testing.assert_array_equal(y2, r)


def test_loss_zero_at_fixed_point():
    c = _critic(K=1, M=1)
    _constant_members(c.net.param_arrays(), [0.7])
    loss, y = c.td_loss(_batch([0.7], [1]), np.zeros((1, 1)), np.random.default_rng(0))
    assert loss.item() == 0.0


def test_loss_averages_members_and_batch():
    c = _critic(K=2, M=1)
    _constant_members(c.net.param_arrays(), [0.0, 1.0])
    loss, _ = c.td_loss(_batch([1.0, 3.0], [1, 1]), np.zeros((2, 1)), np.random.default_rng(0))
    # member 0 errors 1, 3; member 1 errors 0, 2
    assert loss.item() == pytest.approx((1 + 9 + 0 + 4) / 4)


def test_empty_batch_is_rejected():
    with pytest.raises(UsageError):
        _critic().td_loss(_batch([], []), np.zeros((0, 1)), np.random.default_rng(0))


def test_td_loss_gradient_matches_finite_differences():
    c = _critic(K=2, M=1, seed=4)
    b = _batch([0.5], [0])
    err = param_gradcheck(c.net, lambda: c.td_loss(b, np.zeros((1, 1)), np.random.default_rng(1))[0])
    assert err < 1e-4


def test_targets_are_constants():
    c = _critic(K=3, M=2, seed=5)
    b = _batch([0.0, 0.2, 1.0], [0, 0, 0])
    a2 = np.zeros((3, 1))
    loss, y = c.td_loss(b, a2, np.random.default_rng(2))
    c.net.zero_grad()
    loss.backward()
    g1 = [p.grad.copy() for p in c.net.params]
    # perturbing target weights moves y, but the online gradient only sees y as data
    for t in c.target_params:
        t += 0.5
    loss2, y2 = c.td_loss(b, a2, np.random.default_rng(2))
    assert not np.allclose(y, y2)
    c.net.zero_grad()
    c.regression_loss(b.s, b.a, y).backward()
    for p, g in zip(c.net.params, g1):
        np.testing.assert_allclose(p.grad, g, rtol=1e-12)


def test_target_decay_after_frozen_updates():
    c = _critic(K=2, M=1, tau=0.005)
    for t in c.target_params:
        t += 1.0
    gap0 = np.sqrt(sum(np.sum((t - o) ** 2) for t, o in zip(c.target_params, c.net.param_arrays())))
    for _ in range(1000):
        c.update_targets()
    gap = np.sqrt(sum(np.sum((t - o) ** 2) for t, o in zip(c.target_params, c.net.param_arrays())))
    assert gap / gap0 == pytest.approx(0.995**1000, rel=1e-9)
    assert 0.995**1000 == pytest.approx(6.7e-3, abs=5e-5)


def test_update_reduces_loss_and_moves_targets():
    c = _critic(K=2, M=1, seed=6)
    c.optimizer.state.lr = 1e-2
    b = _batch([1.0, 0.0, 1.0, 0.0], [1, 1, 1, 1])
    before = c.td_loss(b, np.zeros((4, 1)), np.random.default_rng(0))[0].item()
    t0 = [t.copy() for t in c.target_params]
    for _ in range(50):
        c.update(b, np.zeros((4, 1)), np.random.default_rng(0))
    after = c.td_loss(b, np.zeros((4, 1)), np.random.default_rng(0))[0].item()
    assert after < before
    assert any(not np.array_equal(a, t) for a, t in zip(t0, c.target_params))


def test_otf_backup_dominates_single_sample():
    # with one member, the argmax over a superset of the single sample never lowers y
    from expo.otf import CandidateSet, select

    c = _critic(K=1, M=1, seed=7)
    rng = np.random.default_rng(0)
    s2 = rng.standard_normal((64, 2))
    cands = rng.uniform(-1, 1, (64, 6, 1))
    q = np.stack([c.q_mean(s2, cands[:, j], target=True) for j in range(6)], axis=1)
    best, _, _ = select(CandidateSet(cands, q, np.zeros(6, bool), cands))
    r, done = np.zeros(64), np.zeros(64)
    y_otf = c.td_targets(r, done, s2, best, rng)
    y_one = c.td_targets(r, done, s2, cands[:, 0], rng)
    assert np.all(y_otf >= y_one)
