"""Policy evaluation, baselines and multi-policy comparison.

Every repetition ``r`` of an evaluation derives its environment stream from
``(seed, r)`` alone, so all policies compared under one master seed see the
same initial cohorts and the same noise (common random numbers).
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import load_checkpoint
from .env import CohortState, EnvParams, TrajectoryWriter, beta
from .env import step as env_step
from .errors import ConfigError
from .networks import CriticNet, PolicyNet
from .option_critic import greedy_option
from .pairing import Pairing, random_pairing

POLICY_KINDS = ("trained", "fixed0", "fixed1", "random")


@dataclass
class PolicySpec:
    kind: str
    pairing: str = "random"
    checkpoint: str | None = None
    name: str | None = None
    greedy_actions: bool = False
    policy: PolicyNet | None = field(default=None, repr=False, compare=False)
    critic: CriticNet | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"policy kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.pairing not in ("random", "greedy"):
            raise ConfigError(f"pairing rule must be 'random' or 'greedy', got {self.pairing!r}")
        if self.name is None:
            self.name = {"trained": "proposed", "fixed0": "action0", "fixed1": "action1", "random": "random"}[self.kind]

    @classmethod
    def trained(cls, policy: PolicyNet, critic: CriticNet, name: str = "proposed", **kw) -> "PolicySpec":
        return cls("trained", pairing="greedy", policy=policy, critic=critic, name=name, **kw)

    def resolve(self) -> "PolicySpec":
        """Load the checkpoint on demand so repetitions share one snapshot."""
        needs_nets = self.kind == "trained" or self.pairing == "greedy"
        if needs_nets and (self.policy is None or self.critic is None):
            if not self.checkpoint:
                raise ConfigError(f"policy {self.name!r} needs a checkpoint")
            self.policy, self.critic = load_checkpoint(self.checkpoint)
        return self


def baseline_specs() -> list[PolicySpec]:
    return [PolicySpec("fixed0"), PolicySpec("fixed1"), PolicySpec("random")]


@dataclass
class EvalReport:
    """Per-repetition evaluation values of one policy.

    ``avg_reward`` is the cohort-summed reward per step averaged over the
    horizon, ``avg_reward_per_capita`` the same divided by ``M * N`` and
    ``discounted`` the gamma-discounted sum of cohort-summed rewards.
    """

    name: str
    avg_reward: list[float]
    avg_reward_per_capita: list[float]
    discounted: list[float]
    seeds: list[int]
    horizon: int
    gamma: float

    @property
    def repetitions(self) -> int:
        return len(self.avg_reward)

    @property
    def mean_avg_reward(self) -> float:
        return float(np.mean(self.avg_reward))

    @property
    def mean_discounted(self) -> float:
        return float(np.mean(self.discounted))

    @property
    def mean_avg_reward_per_capita(self) -> float:
        return float(np.mean(self.avg_reward_per_capita))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def discounted_sum(rewards, gamma: float) -> float:
    total, w = 0.0, 1.0
    for r in rewards:
        total += w * float(r)
        w *= gamma
    return total


def _streams(seed: int, rep: int):
    env_seq = np.random.SeedSequence([seed, rep, 0])
    reset_seq, noise_seq = env_seq.spawn(2)
    pol_rng = np.random.default_rng(np.random.SeedSequence([seed, rep, 1]))
    return np.random.default_rng(reset_seq), np.random.default_rng(noise_seq), pol_rng


def _choose_pairing(spec: PolicySpec, s: np.ndarray, rng, allow_byes: bool) -> Pairing:
    if spec.pairing == "greedy":
        return greedy_option(s, spec.critic, allow_byes)[0]
    return random_pairing(s.shape[0], allow_byes, rng)


def _choose_action(spec: PolicySpec, s: np.ndarray, pairing: Pairing, rng) -> np.ndarray:
    if spec.kind == "fixed0":
        return np.zeros(s.shape, dtype=np.int64)
    if spec.kind == "fixed1":
        return np.ones(s.shape, dtype=np.int64)
    if spec.kind == "random":
        return rng.integers(0, 2, size=s.shape)
    action, _ = spec.policy.sample(s, pairing, rng, greedy=spec.greedy_actions)
    return action


def rollout(spec: PolicySpec, env: EnvParams, horizon: int, seed: int, rep: int,
            allow_byes: bool = False, initial_state: np.ndarray | None = None,
            writer: TrajectoryWriter | None = None) -> np.ndarray:
    """Cohort-summed reward of every step of one repetition."""
    reset_rng, noise_rng, pol_rng = _streams(seed, rep)
    s0 = reset_rng.standard_normal((env.m, env.n))
    if initial_state is not None:
        s0 = np.array(initial_state, dtype=np.float64)
    state = CohortState(s0, 0)
    pairing = None
    totals = np.empty(horizon)
    for t in range(horizon):
        if beta(t, env.h):
            pairing = _choose_pairing(spec, state.s, pol_rng, allow_byes)
        action = _choose_action(spec, state.s, pairing, pol_rng)
        nxt, rewards = env_step(state, pairing, action, env, noise_rng)
        if writer is not None:
            writer.write(t, pairing, state.s, action, rewards)
        totals[t] = rewards.sum()
        state = nxt
    return totals


def eval_threads() -> int:
    raw = os.environ.get("PAIROPT_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"PAIROPT_THREADS must be an integer, got {raw!r}") from exc


def evaluate(spec: PolicySpec, env: EnvParams, horizon: int = 1000, gamma: float = 0.9,
             repetitions: int = 20, seed: int = 0, allow_byes: bool = False,
             threads: int | None = None, initial_state: np.ndarray | None = None) -> EvalReport:
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    spec.resolve()
    threads = eval_threads() if threads is None else max(1, threads)

    def one(rep):
        return rollout(spec, env, horizon, seed, rep, allow_byes, initial_state)

    if threads == 1:
        runs = [one(r) for r in range(repetitions)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(one, range(repetitions)))
    avg = [float(np.mean(x)) for x in runs]
    return EvalReport(
        name=spec.name,
        avg_reward=avg,
        avg_reward_per_capita=[a / (env.m * env.n) for a in avg],
        discounted=[discounted_sum(x, gamma) for x in runs],
        seeds=[seed] * repetitions,
        horizon=horizon,
        gamma=gamma,
    )


@dataclass
class Comparison:
    reports: list[EvalReport]

    def ranking(self) -> list[EvalReport]:
        # stable: equal means keep input order
        return sorted(self.reports, key=lambda r: -r.mean_avg_reward)

    def rows(self) -> list[dict]:
        return [
            {
                "rank": k + 1,
                "method": r.name,
                "average_reward": r.mean_avg_reward,
                "average_reward_per_capita": r.mean_avg_reward_per_capita,
                "discounted_cumulative_reward": r.mean_discounted,
                "repetitions": r.repetitions,
            }
            for k, r in enumerate(self.ranking())
        ]

    def table(self) -> str:
        gamma = self.reports[0].gamma if self.reports else 0.9
        lines = [f"{'rank':>4}  {'method':<12} {'average reward':>16} {f'{gamma:g}-discounted reward':>24}"]
        for row in self.rows():
            lines.append(
                f"{row['rank']:>4}  {row['method']:<12} {row['average_reward']:>16.6g} "
                f"{row['discounted_cumulative_reward']:>24.6g}"
            )
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows(), "reports": [r.to_dict() for r in self.reports]}, indent=1)


def compare(specs: list[PolicySpec], env: EnvParams, horizon: int = 1000, gamma: float = 0.9,
            repetitions: int = 20, seed: int = 0, allow_byes: bool = False,
            threads: int | None = None) -> Comparison:
    if len(specs) < 2:
        raise ConfigError("compare needs at least two policies")
    reports = [evaluate(s, env, horizon, gamma, repetitions, seed, allow_byes, threads) for s in specs]
    return Comparison(reports)
