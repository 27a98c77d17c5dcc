import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairopt.env import (CohortState, EnvParams, TeamCompetitionEnv, TrajectoryWriter, beta, read_trajectory,
                         reset, step, week_of)
from pairopt.errors import ConfigError, ContractError
from pairopt.pairing import Pairing, canonicalize, random_pairing


def loop_step(s, pairing, a, p: EnvParams):
    """Per-subject evaluation of the affine transition with Python floats."""
    opp = pairing.opponents()
    m, n = len(s), len(s[0])
    out = [[0.0] * n for _ in range(m)]
    for q in range(m):
        opp_sum = sum(float(x) for x in s[opp[q]])
        for j in range(n):
            act = int(a[q][j])
            out[q][j] = (p.intercept[act] + p.self_coef[act] * float(s[q][j]) + p.opp_coef[act] * opp_sum
                         + p.bye_bonus[act] * (1.0 if opp[q] == q else 0.0))
    return out


class TestHandExamples:
    def test_bye_zero_state(self):
        p = EnvParams(m=2, n=3)
        _, r = step(CohortState(np.zeros((2, 3))), Pairing(((0, 0), (1, 1))), np.zeros((2, 3), int), p)
        assert np.all(np.abs(r - 0.0098) <= 1e-12)

    def test_action1_paired_zero_state(self):
        p = EnvParams(m=2, n=3)
        _, r = step(CohortState(np.zeros((2, 3))), Pairing(((0, 1),)), np.ones((2, 3), int), p)
        assert np.all(np.abs(r + 0.0009) <= 1e-12)

    def test_single_subject_pair(self):
        p = EnvParams(m=2, n=1)
        _, r = step(CohortState(np.array([[1.0], [0.0]])), Pairing(((0, 1),)), np.zeros((2, 1), int), p)
        assert abs(r[0, 0] - 0.3284) <= 1e-12
        assert abs(r[1, 0] - 0.0667) <= 1e-12


class TestStep:
    @pytest.mark.parametrize("seed", range(10))
    def test_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = EnvParams(m=6, n=4)
        s = rng.normal(size=(6, 4))
        a = rng.integers(0, 2, size=(6, 4))
        pairing = random_pairing(6, True, rng)
        _, r = step(CohortState(s), pairing, a, p)
        np.testing.assert_allclose(r, loop_step(s, pairing, a, p), rtol=0, atol=1e-12)

    def test_linearity(self, rng):
        p = EnvParams(m=4, n=3)
        pairing = Pairing(((0, 2), (1, 3)))
        a = rng.integers(0, 2, size=(4, 3))
        s1, s2 = rng.normal(size=(2, 4, 3))
        zero = step(CohortState(np.zeros((4, 3))), pairing, a, p)[1]
        f = lambda s: step(CohortState(s), pairing, a, p)[1] - zero
        np.testing.assert_allclose(f(2.0 * s1 - 3.0 * s2), 2.0 * f(s1) - 3.0 * f(s2), atol=1e-12)

    def test_team_relabel_equivariance(self, rng):
        p = EnvParams(m=6, n=2)
        s = rng.normal(size=(6, 2))
        a = rng.integers(0, 2, size=(6, 2))
        pairing = Pairing(((0, 3), (1, 5), (2, 4)))
        perm = rng.permutation(6)
        r = step(CohortState(s), pairing, a, p)[1]
        s2, a2 = np.empty_like(s), np.empty_like(a)
        s2[perm], a2[perm] = s, a
        r2 = step(CohortState(s2), pairing.relabel(perm), a2, p)[1]
        np.testing.assert_allclose(r2[perm], r, atol=1e-14)

    def test_deterministic_without_noise(self, rng):
        p = EnvParams()
        s = rng.normal(size=(10, 10))
        a = rng.integers(0, 2, size=(10, 10))
        pairing = random_pairing(10, seed=1)
        assert np.array_equal(step(CohortState(s), pairing, a, p)[1], step(CohortState(s), pairing, a, p)[1])

    def test_clock_advances_and_input_untouched(self, rng):
        s = rng.normal(size=(2, 2))
        keep = s.copy()
        nxt, r = step(CohortState(s, 5), Pairing(((0, 1),)), np.zeros((2, 2), int), EnvParams(m=2, n=2))
        assert nxt.t == 6
        assert np.array_equal(s, keep)
        r[0, 0] = 99.0
        assert nxt.s[0, 0] != 99.0

    def test_rejects_bad_actions(self):
        p = EnvParams(m=2, n=2)
        st_ = CohortState(np.zeros((2, 2)))
        with pytest.raises(ContractError):
            step(st_, Pairing(((0, 1),)), np.full((2, 2), 2), p)
        with pytest.raises(ContractError):
            step(st_, Pairing(((0, 1),)), np.zeros((2, 3), int), p)

    def test_rejects_wrong_pairing_size(self):
        p = EnvParams(m=4, n=1)
        with pytest.raises(ContractError):
            step(CohortState(np.zeros((4, 1))), Pairing(((0, 1),)), np.zeros((4, 1), int), p)

    def test_noise_needs_rng(self):
        p = EnvParams(m=2, n=1, noise_std=0.1)
        with pytest.raises(ContractError):
            step(CohortState(np.zeros((2, 1))), Pairing(((0, 1),)), np.zeros((2, 1), int), p)

    def test_noise_reproducible(self):
        p = EnvParams(m=2, n=2, noise_std=0.5)
        args = (CohortState(np.zeros((2, 2))), Pairing(((0, 1),)), np.zeros((2, 2), int), p)
        r1 = step(*args, rng=np.random.default_rng(3))[1]
        r2 = step(*args, rng=np.random.default_rng(3))[1]
        assert np.array_equal(r1, r2)
        assert not np.allclose(r1, step(*args[:3], EnvParams(m=2, n=2))[1])


class TestParams:
    @pytest.mark.parametrize("kw", [dict(m=1), dict(n=0), dict(h=0), dict(noise_std=-1.0), dict(intercept=(1.0,))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            EnvParams(**kw)

    def test_defaults(self):
        p = EnvParams()
        assert (p.m, p.n, p.h) == (10, 10, 7)
        assert p.intercept == (-0.0005, -0.0009)
        assert p.self_coef == (0.3289, 0.3245)
        assert p.opp_coef == (0.0672, 0.0746)
        assert p.bye_bonus == (0.0103, 0.0136)


class TestReset:
    def test_shape_and_determinism(self):
        p = EnvParams()
        a, b = reset(p, 5), reset(p, 5)
        assert a.s.shape == (10, 10) and a.t == 0
        assert np.array_equal(a.s, b.s)

    def test_standard_normal_mean(self):
        means = [reset(EnvParams(), seed).s.mean() for seed in range(100)]
        assert abs(np.mean(means)) < 0.5

    def test_env_wrapper(self):
        env = TeamCompetitionEnv(EnvParams(m=2, n=1), seed=4)
        st_ = env.reset(np.array([[1.0], [0.0]]))
        nxt, r = env.step(Pairing(((0, 1),)), np.zeros((2, 1), int))
        assert nxt.t == 1 and abs(r[0, 0] - 0.3284) < 1e-12
        with pytest.raises(ContractError):
            env.reset(np.zeros((3, 1)))


class TestTermination:
    def test_examples(self):
        assert beta(0, 7) == 1
        assert beta(3, 7) == 0
        assert beta(7, 7) == 1
        assert week_of(13, 7) == 1

    @given(st.integers(0, 10_000), st.integers(1, 30))
    def test_one_boundary_per_week(self, t, h):
        assert beta(t, h) in (0, 1)
        w = week_of(t, h)
        assert sum(beta(u, h) for u in range(w * h, (w + 1) * h)) == 1

    def test_negative_time(self):
        with pytest.raises(ContractError):
            beta(-1, 7)


class TestTrajectory:
    def test_round_trip(self, rng):
        p = EnvParams(m=4, n=2)
        buf = io.StringIO()
        w = TrajectoryWriter(buf, p.h)
        state = CohortState(rng.normal(size=(4, 2)))
        pairing = canonicalize([(3, 0), (2, 1)])
        for t in range(9):
            a = rng.integers(0, 2, size=(4, 2))
            nxt, r = step(state, pairing, a, p)
            w.write(t, pairing, state.s, a, r)
            state = nxt
        recs = read_trajectory(buf.getvalue().splitlines())
        assert len(recs) == 9 == w.count
        assert recs[8]["week"] == 1
        assert recs[0]["pairing"] == pairing
        assert str(recs[0]["pairing"]) == "0-3,1-2"
        np.testing.assert_array_equal(recs[8]["reward"], state.s)
