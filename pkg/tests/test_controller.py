import itertools
import math

import numpy as np
import pytest

from awmm.controller import (ACTION_DELTAS, COMMIT_EXPECTED, MEAN_CENTER, NO_BASELINE,
                             ControllerState, EpisodeRecord, log_prob_grad, make_controllers,
                             policy_gradient, reinforce_update, sample_actions, tie_break,
                             weights_from_logits)
from awmm.errors import StateError
from awmm.numcore import softmax


def test_equal_logits_give_uniform_weights():
    alpha = weights_from_logits([1.0] * 5)
    assert all(abs(a - 0.2) < 1e-12 for a in alpha.values)


def test_softmax_weights_direct_evaluation():
    alpha = weights_from_logits([math.log(2), 0, 0, 0, 0])
    np.testing.assert_allclose(alpha.values, [2 / 6, 1 / 6, 1 / 6, 1 / 6, 1 / 6], atol=1e-15)


def test_weights_shift_invariance():
    rng = np.random.default_rng(0)
    for _ in range(200):
        beta = rng.normal(size=5) * 3
        c = rng.normal() * 10
        np.testing.assert_allclose(weights_from_logits(beta + c).values,
                                   weights_from_logits(beta).values, atol=1e-12)


@pytest.mark.parametrize("bad", [[1, 2, np.nan, 0, 0], [np.inf, 0, 0, 0, 0], [1, 2, 3]])
def test_weights_reject_bad_logits(bad):
    with pytest.raises(ValueError):
        weights_from_logits(bad)


def test_degenerate_policy_always_steps_down():
    ctls = make_controllers()
    for c in ctls:
        c.theta[:] = [50.0, -50.0, -50.0]
    ep = sample_actions(ctls, 7, np.random.default_rng(0))
    assert np.all(ep.actions == 0)
    np.testing.assert_allclose(ep.betas, 0.8)


def test_uniform_policy_action_frequencies():
    ctls = make_controllers()
    ep = sample_actions(ctls, 6000, np.random.default_rng(1))  # 30,000 draws over 5 controllers
    freq = np.bincount(ep.actions.ravel(), minlength=3) / ep.actions.size
    assert np.all(np.abs(freq - 1 / 3) < 0.02)


def test_fusion_step_up_weight():
    ctls = make_controllers()
    for c in ctls:
        c.theta[:] = [-60.0, 60.0, -60.0]  # hold
    ctls[4].theta[:] = [-60.0, -60.0, 60.0]  # fusion steps up
    ep = sample_actions(ctls, 1, np.random.default_rng(0))
    expected = math.exp(1.2) / (4 * math.exp(1.0) + math.exp(1.2))
    assert ep.alphas[0, 4] == pytest.approx(expected, abs=1e-12)
    assert round(expected, 4) == 0.2339


def test_sample_actions_rejects_zero_k():
    with pytest.raises(ValueError):
        sample_actions(make_controllers(), 0, np.random.default_rng(0))


def test_joint_log_prob_is_sum_over_controllers():
    rng = np.random.default_rng(2)
    ctls = make_controllers()
    for c in ctls:
        c.theta[:] = rng.normal(size=3)
    ep = sample_actions(ctls, 20, rng)
    for j in range(20):
        expected = sum(math.log(softmax(c.theta)[ep.actions[j, i]]) for i, c in enumerate(ctls))
        assert ep.log_probs[j] == pytest.approx(expected, abs=1e-12)


def test_log_prob_grad_uniform():
    np.testing.assert_allclose(log_prob_grad(np.zeros(3), 0), [2 / 3, -1 / 3, -1 / 3], atol=1e-15)


def test_log_prob_grad_sums_to_zero_and_matches_finite_differences():
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(50):
        theta = rng.normal(size=3) * 2
        a = int(rng.integers(3))
        g = log_prob_grad(theta, a)
        assert abs(g.sum()) < 1e-12
        for k in range(3):
            up, down = theta.copy(), theta.copy()
            up[k] += h
            down[k] -= h
            fd = (np.log(softmax(up)[a]) - np.log(softmax(down)[a])) / (2 * h)
            assert abs(fd - g[k]) / np.linalg.norm(g) < 1e-8


def test_tie_break():
    assert tie_break([0.8, 0.9, 0.9]) == 1
    assert tie_break([0.5] * 4) == 0
    rng = np.random.default_rng(4)
    for _ in range(100):
        r = rng.integers(0, 5, size=8) / 4
        best = 0
        for j, v in enumerate(r):
            if v > r[best]:
                best = j
        assert tie_break(r) == best


def episode_with(ctls, k, rng, rewards):
    ep = sample_actions(ctls, k, rng)
    ep.rewards = np.asarray(rewards, dtype=float)
    return ep


def test_constant_rewards_leave_theta_unchanged():
    ctls = make_controllers()
    ep = episode_with(ctls, 6, np.random.default_rng(5), [0.7] * 6)
    reinforce_update(ctls, ep, baseline=MEAN_CENTER)
    for c in ctls:
        np.testing.assert_array_equal(c.theta, np.zeros(3))


def test_single_sample_update_follows_log_prob_grad():
    ctls = make_controllers(tasks=("b",))
    ep = episode_with(ctls, 1, np.random.default_rng(6), [1.0])
    g = policy_gradient(ctls, ep, NO_BASELINE)[0]
    np.testing.assert_allclose(g, log_prob_grad(np.zeros(3), ep.actions[0, 0]))
    reinforce_update(ctls, ep, eta=0.01, baseline=NO_BASELINE)
    step = ctls[0].theta
    np.testing.assert_allclose(np.sign(step), np.sign(g))


def test_missing_rewards():
    ctls = make_controllers()
    ep = sample_actions(ctls, 3, np.random.default_rng(0))
    with pytest.raises(StateError):
        reinforce_update(ctls, ep)


def test_committed_beta_comes_from_selected_replica():
    rng = np.random.default_rng(7)
    ctls = make_controllers()
    ep = episode_with(ctls, 5, rng, [0.1, 0.4, 0.9, 0.2, 0.9])
    reinforce_update(ctls, ep)
    assert ep.selected == 2
    np.testing.assert_allclose([c.beta for c in ctls], ep.betas[2])
    assert np.all(np.isin(np.round(ep.betas[2] - 1.0, 12), ACTION_DELTAS))


def test_expected_commit_rule():
    ctls = make_controllers()
    ctls[0].theta[:] = [0.0, 0.0, math.log(2)]  # p = (1/4, 1/4, 1/2)
    ep = episode_with(ctls, 3, np.random.default_rng(8), [0.1, 0.2, 0.3])
    reinforce_update(ctls, ep, commit=COMMIT_EXPECTED)
    assert ctls[0].beta == pytest.approx(1.0 + 0.5 * 0.2 - 0.25 * 0.2)
    assert ctls[1].beta == pytest.approx(1.0)


def test_update_touches_only_its_own_controller():
    rng = np.random.default_rng(9)
    ctls = make_controllers()
    ep = episode_with(ctls, 4, rng, [0.0, 1.0, 0.5, 0.25])
    solo = [ControllerState(c.task, c.beta, c.theta.copy()) for c in ctls]
    reinforce_update(ctls, ep)
    for i in range(5):
        single = EpisodeRecord(0, ep.actions[:, [i]], None, ep.betas[:, [i]],
                               ep.alphas, ep.rewards.copy())
        reinforce_update([solo[i]], single)
        np.testing.assert_array_equal(solo[i].theta, ctls[i].theta)


def exact_policy_gradient(thetas, table):
    """d/dtheta E[R] by enumerating every joint action."""
    pis = [softmax(t) for t in thetas]
    grads = [np.zeros(3) for _ in thetas]
    for joint in itertools.product(range(3), repeat=len(thetas)):
        p = np.prod([pi[a] for pi, a in zip(pis, joint)])
        for i, a in enumerate(joint):
            grads[i] += p * table[joint] * log_prob_grad(thetas[i], a)
    return grads


def monte_carlo_gradient(thetas, table, episodes, k, baseline, seed):
    ctls = [ControllerState(str(i), 1.0, np.array(t, dtype=float)) for i, t in enumerate(thetas)]
    rng = np.random.default_rng(seed)
    total = [np.zeros(3) for _ in thetas]
    chunk = 10_000
    for start in range(0, episodes, chunk):
        n = min(chunk, episodes - start)
        ep = sample_actions(ctls, n * k, rng)
        rewards = table[tuple(ep.actions.T)]
        onehots = [np.eye(3)[ep.actions[:, i]] for i in range(len(ctls))]
        r = rewards.reshape(n, k)
        if baseline == MEAN_CENTER:
            r = k / (k - 1) * (r - r.mean(axis=1, keepdims=True))
        r = r.reshape(-1)
        for i, c in enumerate(ctls):
            total[i] += (r[:, None] * (onehots[i] - c.policy())).sum(axis=0) / k
    return [t / episodes for t in total]


REWARD_TABLE = np.array([[0.1, 0.9, 0.3],
                         [0.6, 0.2, 0.8],
                         [0.0, 0.5, 1.0]])
THETAS = [np.array([0.3, -0.5, 0.2]), np.array([-0.4, 0.1, 0.6])]


def test_vectorised_estimator_agrees_with_policy_gradient():
    rng = np.random.default_rng(10)
    ctls = [ControllerState(str(i), 1.0, t.copy()) for i, t in enumerate(THETAS)]
    ep = sample_actions(ctls, 10, rng)
    ep.rewards = REWARD_TABLE[tuple(ep.actions.T)]
    direct = policy_gradient(ctls, ep, MEAN_CENTER)
    r = ep.rewards
    r = 10 / 9 * (r - r.mean())
    for i in range(2):
        manual = sum(r[j] * log_prob_grad(THETAS[i], ep.actions[j, i]) for j in range(10)) / 10
        np.testing.assert_allclose(direct[i], manual, atol=1e-14)


@pytest.mark.parametrize("baseline", [NO_BASELINE, MEAN_CENTER])
def test_estimator_is_unbiased(baseline):
    exact = exact_policy_gradient(THETAS, REWARD_TABLE)
    est = monte_carlo_gradient(THETAS, REWARD_TABLE, 20_000, 10, baseline, seed=11)
    for e, x in zip(est, exact):
        np.testing.assert_allclose(e, x, rtol=0.1, atol=0.005)


def test_policy_improves_on_rigged_reward():
    ctls = make_controllers()
    rng = np.random.default_rng(12)
    for _ in range(200):
        ep = sample_actions(ctls, 10, rng)
        ep.rewards = (ep.actions[:, 0] == 2).astype(float)
        reinforce_update(ctls, ep, eta=0.05)
    assert ctls[0].policy()[2] > 0.9
