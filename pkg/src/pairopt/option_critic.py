"""Option-critic training with a fixed weekly termination schedule.

Options are weekly pairings.  At each week boundary the pairing is chosen
epsilon-greedily: the greedy choice is the max-weight matching of the
critic's pair-value matrix.  Within the week the shared intra-option policy
samples every subject's action.  Each day the critic takes a semi-gradient
TD(0) step towards ``R + gamma * U(omega, s')`` and the policy takes a
likelihood-ratio step weighted by the advantage.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .env import CohortState, EnvParams, beta
from .env import reset as env_reset
from .env import step as env_step
from .errors import ConfigError, DivergenceError, NumericError
from .networks import CriticNet, NetConfig, PolicyNet, joint_policy_logprob, policy_entropy
from .nn_core import OptimState, ParamStore, clip_grad_norm, optimizer_step
from .pairing import Pairing, random_pairing, solve_matching

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iteration", "td_error", "policy_entropy", "greedy_option_score", "weekly_return", "epsilon")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    lr_policy: float = 0.001
    lr_critic: float = 0.001
    optimizer: str = "adam"
    iterations: int = 10000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    baseline: str = "critic"
    allow_byes: bool = False
    # days per training episode; 0 runs one continuing trajectory
    episode_length: int = 70
    # multiplier on the cohort-summed reward; <= 0 means 1 / (M * N)
    reward_scale: float = 0.0
    grad_clip: float = 0.0
    divergence_limit: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("lr_policy", "lr_critic"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("eps_start", "eps_end", "eps_decay_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.baseline not in ("critic", "none"):
            raise ConfigError(f"baseline must be 'critic' or 'none', got {self.baseline!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.episode_length < 0:
            raise ConfigError(f"episode_length must be >= 0, got {self.episode_length}")
        if self.grad_clip < 0:
            raise ConfigError(f"grad_clip must be >= 0, got {self.grad_clip}")

    def epsilon(self, iteration: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_end`` over the decay window."""
        horizon = self.eps_decay_fraction * self.iterations
        if horizon <= 0:
            return self.eps_end
        frac = min(1.0, iteration / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def scale_for(self, env: EnvParams) -> float:
        return self.reward_scale if self.reward_scale > 0 else 1.0 / (env.m * env.n)


@dataclass
class TransitionRecord:
    state: np.ndarray
    pairing: Pairing
    action: np.ndarray
    rewards: np.ndarray
    next_state: np.ndarray
    beta_next: int
    t: int


@dataclass
class LearnerState:
    policy: PolicyNet
    critic: CriticNet
    opt_policy: OptimState
    opt_critic: OptimState
    iteration: int = 0
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, cfg: TrainConfig, net_cfg: NetConfig = NetConfig()) -> "LearnerState":
        pol_seq, crit_seq = np.random.SeedSequence([cfg.seed, 1]).spawn(2)
        return cls(
            PolicyNet(net_cfg, seed=np.random.default_rng(pol_seq)),
            CriticNet(net_cfg, seed=np.random.default_rng(crit_seq)),
            OptimState(cfg.lr_policy, cfg.optimizer),
            OptimState(cfg.lr_critic, cfg.optimizer),
        )

    def params_finite_and_bounded(self, limit: float):
        for store in (self.policy.store, self.critic.store):
            for name, p in store.params.items():
                if not np.all(np.isfinite(p)):
                    raise NumericError(f"segment {name!r} is non-finite")
                if np.max(np.abs(p)) > limit:
                    raise DivergenceError(
                        f"segment {name!r} exceeded the divergence limit {limit:g} at iteration {self.iteration}"
                    )


# ---------------------------------------------------------------------------
# option selection and values
# ---------------------------------------------------------------------------

def greedy_option(s: np.ndarray, critic: CriticNet, allow_byes: bool = False) -> tuple[Pairing, float]:
    return solve_matching(critic.value_matrix(s, allow_byes), allow_byes)


def select_option(s: np.ndarray, critic: CriticNet, eps: float, rng, allow_byes: bool = False) -> Pairing:
    """Epsilon-greedy option: a uniform random pairing with probability ``eps``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    explore = rng.random() < eps
    if explore:
        return random_pairing(s.shape[0], allow_byes, rng)
    return greedy_option(s, critic, allow_byes)[0]


def u_value(next_s: np.ndarray, pairing: Pairing, critic: CriticNet, beta_next: int,
            allow_byes: bool = False) -> float:
    """Continuation value ``Q(s', omega)`` mid-week, greedy ``max_omega Q(s', omega)`` at a boundary."""
    if beta_next not in (0, 1):
        raise ConfigError(f"beta_next must be 0 or 1, got {beta_next}")
    if beta_next == 0:
        return critic.q(next_s, pairing)
    return greedy_option(next_s, critic, allow_byes)[1]


def td_target(rec: TransitionRecord, critic: CriticNet, gamma: float, reward_scale: float,
              allow_byes: bool = False) -> float:
    reward = reward_scale * float(np.sum(rec.rewards))
    if gamma == 0.0:
        return reward
    return reward + gamma * u_value(rec.next_state, rec.pairing, critic, rec.beta_next, allow_byes)


def _step_store(store: ParamStore, opt: OptimState, clip: float) -> float:
    norm = clip_grad_norm(store, clip)
    optimizer_step(store, opt)
    return norm


def critic_update(rec: TransitionRecord, critic: CriticNet, opt: OptimState, gamma: float = 0.9,
                  reward_scale: float = 1.0, allow_byes: bool = False, grad_clip: float = 0.0,
                  target: float | None = None) -> float:
    """Semi-gradient step on ``0.5 * delta**2``; returns the TD error ``delta``."""
    if target is None:
        target = td_target(rec, critic, gamma, reward_scale, allow_byes)
    q, ctx = critic.q_forward(rec.state, rec.pairing)
    delta = target - q
    if not np.isfinite(delta):
        raise NumericError(f"non-finite TD error at t={rec.t} (target={target}, q={q})")
    critic.q_backward(ctx, -delta)
    _step_store(critic.store, opt, grad_clip)
    return delta


def policy_update(rec: TransitionRecord, policy: PolicyNet, critic: CriticNet, opt: OptimState,
                  gamma: float = 0.9, reward_scale: float = 1.0, baseline: str = "critic",
                  allow_byes: bool = False, grad_clip: float = 0.0,
                  advantage: float | None = None) -> float:
    """Likelihood-ratio ascent step ``lr * A * grad log pi``; returns the gradient norm."""
    if advantage is None:
        advantage = td_target(rec, critic, gamma, reward_scale, allow_byes)
        if baseline == "critic":
            advantage -= critic.q(rec.state, rec.pairing)
    if advantage == 0.0:
        return 0.0
    logp = joint_policy_logprob(rec.state, rec.pairing, rec.action, policy, grad_scale=-advantage)
    if not np.isfinite(logp):
        log.warning("skipping policy update at t=%d: action has zero probability", rec.t)
        policy.store.zero_grad()
        return 0.0
    return _step_store(policy.store, opt, grad_clip)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(env: EnvParams, cfg: TrainConfig, net_cfg: NetConfig = NetConfig(),
          learner: LearnerState | None = None,
          callback: Callable[[LearnerState, dict], None] | None = None,
          record: Callable[[TransitionRecord], None] | None = None):
    """Run ``cfg.iterations`` environment days; returns ``(learner, metrics)``.

    ``metrics`` holds one dict per iteration with the ``METRIC_COLUMNS`` keys.
    ``callback(learner, row)`` runs after every iteration (checkpointing),
    ``record(transition)`` sees every transition.
    """
    if cfg.episode_length and cfg.episode_length % env.h:
        raise ConfigError(f"episode_length {cfg.episode_length} must be a multiple of h={env.h}")
    learner = learner or LearnerState.initial(cfg, net_cfg)
    policy, critic = learner.policy, learner.critic
    scale = cfg.scale_for(env)
    env_seq, opt_seq, act_seq = np.random.SeedSequence([cfg.seed, 2]).spawn(3)
    env_rng = np.random.default_rng(env_seq)
    option_rng = np.random.default_rng(opt_seq)
    action_rng = np.random.default_rng(act_seq)

    state = CohortState(env_rng.standard_normal((env.m, env.n)), 0)
    pairing: Pairing | None = None
    eps = cfg.epsilon(0)
    greedy_score = float("nan")
    week_return, last_week_return = 0.0, float("nan")
    metrics: list[dict] = []

    for it in range(cfg.iterations):
        if beta(state.t, env.h):
            eps = cfg.epsilon(it)
            greedy_pairing, greedy_score = greedy_option(state.s, critic, cfg.allow_byes)
            if option_rng.random() < eps:
                pairing = random_pairing(env.m, cfg.allow_byes, option_rng)
            else:
                pairing = greedy_pairing

        action, pcache = policy.sample(state.s, pairing, action_rng)
        entropy = policy_entropy(pcache.probs)
        nxt, rewards = env_step(state, pairing, action, env, env_rng)
        rec = TransitionRecord(state.s, pairing, action, rewards, nxt.s, beta(nxt.t, env.h), state.t)
        if record is not None:
            record(rec)

        target = td_target(rec, critic, cfg.gamma, scale, cfg.allow_byes)
        q_s, ctx = critic.q_forward(rec.state, rec.pairing)
        delta = target - q_s
        if not np.isfinite(delta):
            raise NumericError(f"non-finite TD error at iteration {it}")
        advantage = delta if cfg.baseline == "critic" else target

        critic.q_backward(ctx, -delta)
        _step_store(critic.store, learner.opt_critic, cfg.grad_clip)
        if advantage != 0.0:
            probs = pcache.probs.reshape(action.shape + (-1,))
            onehot = np.zeros_like(probs)
            np.put_along_axis(onehot, action[..., None], 1.0, axis=-1)
            policy.backward(pcache, -advantage * (onehot - probs))
            _step_store(policy.store, learner.opt_policy, cfg.grad_clip)

        learner.iteration += 1
        learner.params_finite_and_bounded(cfg.divergence_limit)

        week_return += float(np.sum(rewards))
        if rec.beta_next:
            last_week_return, week_return = week_return, 0.0
        state = nxt
        if cfg.episode_length and state.t >= cfg.episode_length:
            state = CohortState(env_rng.standard_normal((env.m, env.n)), 0)

        row = {
            "iteration": it,
            "td_error": float(delta),
            "policy_entropy": entropy,
            "greedy_option_score": float(greedy_score),
            "weekly_return": float(last_week_return),
            "epsilon": float(eps),
        }
        metrics.append(row)
        learner.diagnostics = row
        if callback is not None:
            callback(learner, row)
    return learner, metrics


def write_metrics_csv(path, metrics: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in metrics:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in METRIC_COLUMNS})


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
