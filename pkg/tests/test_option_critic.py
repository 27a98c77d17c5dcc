import numpy as np
import pytest

from pairopt.env import EnvParams
from pairopt.errors import ConfigError, DivergenceError
from pairopt.networks import CriticNet, NetConfig, PolicyNet, q_omega
from pairopt.nn_core import OptimState
from pairopt.option_critic import (METRIC_COLUMNS, LearnerState, TrainConfig, TransitionRecord, critic_update,
                                   greedy_option, policy_update, select_option, td_target, train, u_value,
                                   write_metrics_csv)
from pairopt.pairing import Pairing, enumerate_pairings, first_within_tolerance, random_pairing, tie_tolerance

BANDIT_ENV = EnvParams(m=2, n=1, intercept=(0.0, 1.0), self_coef=(0.0, 0.0), opp_coef=(0.0, 0.0),
                       bye_bonus=(0.0, 0.0))


def perturbed_critic(seed):
    rng = np.random.default_rng(seed)
    critic = CriticNet(seed=rng)
    critic.store.set_flat(critic.store.flat() + 0.3 * rng.normal(size=critic.n_params()))
    return rng, critic


def brute_force_q_argmax(s, critic, allow_byes=False):
    """First pairing in canonical order whose Q is tied with the maximum."""
    options = list(enumerate_pairings(s.shape[0], allow_byes))
    qs = [q_omega(s, p, critic) for p in options]
    tol = tie_tolerance(critic.value_matrix(s, allow_byes))
    k = first_within_tolerance(qs, tol)
    return options[k], max(qs)


def record(rng, m=4, n=3, beta_next=0, pairing=None):
    s = rng.normal(size=(m, n))
    return TransitionRecord(s, pairing or random_pairing(m, seed=rng), rng.integers(0, 2, size=(m, n)),
                            rng.normal(size=(m, n)), rng.normal(size=(m, n)), beta_next, 0)


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(gamma=-0.1), dict(lr_policy=0.0), dict(eps_start=1.5),
                                    dict(baseline="avg"), dict(optimizer="rmsprop"), dict(iterations=-1),
                                    dict(episode_length=-7), dict(grad_clip=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_epsilon_schedule(self):
        cfg = TrainConfig(iterations=100, eps_start=1.0, eps_end=0.0, eps_decay_fraction=0.5)
        assert cfg.epsilon(0) == 1.0
        assert cfg.epsilon(25) == pytest.approx(0.5)
        assert cfg.epsilon(50) == 0.0 == cfg.epsilon(99)

    def test_reward_scale(self):
        assert TrainConfig().scale_for(EnvParams()) == 0.01
        assert TrainConfig(reward_scale=2.0).scale_for(EnvParams()) == 2.0


class TestOptionSelection:
    @pytest.mark.parametrize("m", [2, 4, 6, 8])
    def test_greedy_equals_brute_force(self, m):
        for seed in range(50 if m < 8 else 10):
            rng, critic = perturbed_critic(seed)
            s = rng.normal(size=(m, 3))
            best, _ = brute_force_q_argmax(s, critic)
            assert select_option(s, critic, 0.0, rng) == best

    def test_greedy_with_byes(self):
        for seed in range(10):
            rng, critic = perturbed_critic(seed)
            s = rng.normal(size=(5, 2))
            best, best_q = brute_force_q_argmax(s, critic, True)
            pairing, score = greedy_option(s, critic, True)
            assert pairing == best
            assert score == pytest.approx(best_q, abs=1e-12)

    def test_eps_one_is_uniform(self):
        _, critic = perturbed_critic(0)
        s = np.random.default_rng(1).normal(size=(4, 2))
        rng = np.random.default_rng(2)
        counts = {}
        draws = 6000
        for _ in range(draws):
            p = select_option(s, critic, 1.0, rng)
            counts[p] = counts.get(p, 0) + 1
        assert len(counts) == 3
        assert all(abs(c / draws - 1 / 3) < 0.03 for c in counts.values())

    def test_deterministic_in_seed(self):
        _, critic = perturbed_critic(0)
        s = np.random.default_rng(1).normal(size=(8, 2))
        a = [select_option(s, critic, 0.5, np.random.default_rng(9)) for _ in range(2)]
        assert a[0] == a[1]


class TestUValue:
    def test_continuation(self):
        rng, critic = perturbed_critic(3)
        s = rng.normal(size=(6, 2))
        p = random_pairing(6, seed=rng)
        assert u_value(s, p, critic, 0) == q_omega(s, p, critic)

    @pytest.mark.parametrize("m", [4, 6, 8])
    def test_boundary_is_max(self, m):
        rng, critic = perturbed_critic(m)
        s = rng.normal(size=(m, 2))
        _, best_q = brute_force_q_argmax(s, critic)
        assert u_value(s, random_pairing(m, seed=rng), critic, 1) == pytest.approx(best_q, abs=1e-12)

    def test_two_teams_single_option(self):
        rng, critic = perturbed_critic(4)
        s = rng.normal(size=(2, 3))
        only = Pairing(((0, 1),))
        assert u_value(s, only, critic, 1) == pytest.approx(q_omega(s, only, critic), abs=1e-14)

    def test_bad_flag(self):
        _, critic = perturbed_critic(0)
        with pytest.raises(ConfigError):
            u_value(np.zeros((2, 1)), Pairing(((0, 1),)), critic, 2)


class TestCriticUpdate:
    def test_td_error_value(self):
        rng, critic = perturbed_critic(5)
        rec = record(rng, beta_next=0)
        expected = 0.5 * rec.rewards.sum() + 0.9 * q_omega(rec.next_state, rec.pairing, critic) \
            - q_omega(rec.state, rec.pairing, critic)
        delta = critic_update(rec, critic, OptimState(1e-3), gamma=0.9, reward_scale=0.5)
        assert delta == pytest.approx(expected, abs=1e-12)

    def test_gamma_zero_target(self):
        rng, critic = perturbed_critic(6)
        rec = record(rng)
        assert td_target(rec, critic, 0.0, 0.25) == 0.25 * rec.rewards.sum()

    @pytest.mark.parametrize("seed", range(5))
    def test_repeated_updates_contract(self, seed):
        rng, critic = perturbed_critic(seed)
        rec = record(rng)
        opt = OptimState(1e-3, "sgd")
        deltas = [abs(critic_update(rec, critic, opt, gamma=0.0, reward_scale=0.1)) for _ in range(200)]
        assert deltas[-1] < deltas[0]

    @pytest.mark.parametrize("seed", range(50))
    def test_loss_gradient(self, seed):
        # gradient of 0.5 * (target - Q)^2 with target held fixed, by central differences
        rng, critic = perturbed_critic(seed)
        rec = record(rng, m=4, n=2)
        target = td_target(rec, critic, 0.9, 0.1)
        critic.store.zero_grad()
        q, ctx = critic.q_forward(rec.state, rec.pairing)
        critic.q_backward(ctx, -(target - q))
        analytic = critic.store.flat_grad()
        base = critic.store.flat()
        worst, h = 0.0, 1e-5
        for k in range(base.size):
            vals = []
            for sign in (1, -1):
                v = base.copy()
                v[k] += sign * h
                critic.store.set_flat(v)
                vals.append(0.5 * (target - critic.q(rec.state, rec.pairing)) ** 2)
            fd = (vals[0] - vals[1]) / (2 * h)
            worst = max(worst, abs(analytic[k] - fd) / max(1.0, abs(fd)))
        critic.store.set_flat(base)
        assert worst < 1e-4


class TestPolicyUpdate:
    def test_zero_advantage_is_noop(self):
        rng, critic = perturbed_critic(0)
        policy = PolicyNet(seed=1)
        before = policy.store.flat()
        assert policy_update(record(rng), policy, critic, OptimState(0.1), advantage=0.0) == 0.0
        assert np.array_equal(before, policy.store.flat())

    def test_positive_advantage_raises_logprob(self):
        rng, critic = perturbed_critic(1)
        policy = PolicyNet(seed=2)
        from pairopt.networks import joint_policy_logprob
        rec = record(rng)
        before = joint_policy_logprob(rec.state, rec.pairing, rec.action, policy)
        policy_update(rec, policy, critic, OptimState(1e-3, "sgd"), advantage=1.0)
        assert joint_policy_logprob(rec.state, rec.pairing, rec.action, policy) > before

    def test_baseline_modes(self):
        rng, critic = perturbed_critic(2)
        rec = record(rng)
        p1, p2 = PolicyNet(seed=3), PolicyNet(seed=3)
        policy_update(rec, p1, critic, OptimState(1e-3, "sgd"), baseline="none")
        target = td_target(rec, critic, 0.9, 1.0)
        policy_update(rec, p2, critic, OptimState(1e-3, "sgd"), advantage=target)
        assert np.array_equal(p1.store.flat(), p2.store.flat())

    @pytest.mark.parametrize("seed", range(50))
    def test_surrogate_gradient(self, seed):
        # ascent direction equals A * grad log pi: compare against differences of A * log pi
        from pairopt.networks import joint_policy_logprob
        from pairopt.nn_core import grad_check
        rng = np.random.default_rng(seed)
        policy = PolicyNet(seed=rng)
        policy.store.set_flat(policy.store.flat() + 0.3 * rng.normal(size=policy.n_params()))
        rec = record(rng, m=4, n=2)
        adv = float(rng.normal())
        err = grad_check(policy.store,
                         lambda st: adv * joint_policy_logprob(rec.state, rec.pairing, rec.action, policy,
                                                               grad_scale=adv))
        assert err < 1e-4


class TestTraining:
    def test_bandit_learns_action_one(self):
        for seed in range(10):
            learner, _ = train(BANDIT_ENV, TrainConfig(gamma=0.0, iterations=2000, seed=seed))
            s = np.random.default_rng(seed).normal(size=(2, 1))
            assert learner.policy.probabilities(s, Pairing(((0, 1),)))[..., 1].min() > 0.95

    def test_metrics_columns(self):
        env = EnvParams(m=4, n=2)
        _, metrics = train(env, TrainConfig(iterations=20, seed=1))
        assert len(metrics) == 20
        assert tuple(metrics[0]) == METRIC_COLUMNS
        assert np.isnan(metrics[0]["weekly_return"]) and np.isfinite(metrics[-1]["weekly_return"])

    def test_bitwise_reproducible(self, tmp_path):
        env = EnvParams(m=4, n=3)
        paths = []
        for k in range(2):
            learner, metrics = train(env, TrainConfig(iterations=150, seed=7))
            path = tmp_path / f"m{k}.csv"
            write_metrics_csv(path, metrics)
            paths.append((learner.policy.store.flat(), learner.critic.store.flat(), path.read_bytes()))
        assert np.array_equal(paths[0][0], paths[1][0])
        assert np.array_equal(paths[0][1], paths[1][1])
        assert paths[0][2] == paths[1][2]

    def test_seeds_differ(self):
        env = EnvParams(m=4, n=2)
        a = train(env, TrainConfig(iterations=30, seed=1))[0].critic.store.flat()
        b = train(env, TrainConfig(iterations=30, seed=2))[0].critic.store.flat()
        assert not np.array_equal(a, b)

    def test_divergence_guard(self):
        with pytest.raises(DivergenceError):
            train(EnvParams(m=4, n=2), TrainConfig(iterations=50, divergence_limit=1e-3))

    def test_episode_length_multiple_of_week(self):
        with pytest.raises(ConfigError):
            train(EnvParams(m=4, n=2), TrainConfig(iterations=5, episode_length=10))

    def test_recorded_transitions(self):
        env = EnvParams(m=4, n=2)
        recs = []
        train(env, TrainConfig(iterations=15, seed=0), record=recs.append)
        assert [r.t for r in recs] == list(range(15))
        assert [r.beta_next for r in recs] == [1 if (t + 1) % 7 == 0 else 0 for t in range(15)]
        # pairings change only at week boundaries
        for k in range(1, 15):
            if k % 7:
                assert recs[k].pairing == recs[k - 1].pairing

    def test_odd_teams_need_byes(self):
        from pairopt.errors import InfeasibleError
        with pytest.raises(InfeasibleError):
            train(EnvParams(m=5, n=1), TrainConfig(iterations=3))
        train(EnvParams(m=5, n=1), TrainConfig(iterations=3, allow_byes=True))
