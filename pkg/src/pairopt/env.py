"""Weekly team-competition simulator.

M teams of N subjects each carry one scalar state (a square-root step count).
Every day each subject receives a binary action (1 = send a message) and moves
according to an action-specific affine map of its own state, the summed
state of the opposing team, and a bye-week bonus when the team is paired with
itself.  The reward of a subject is its next-day state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError
from .pairing import Pairing

DEFAULT_INTERCEPT = (-0.0005, -0.0009)
DEFAULT_SELF_COEF = (0.3289, 0.32450)
DEFAULT_OPP_COEF = (0.0672, 0.0746)
DEFAULT_BYE_BONUS = (0.0103, 0.0136)


@dataclass(frozen=True)
class EnvParams:
    m: int = 10
    n: int = 10
    h: int = 7
    intercept: tuple[float, float] = DEFAULT_INTERCEPT
    self_coef: tuple[float, float] = DEFAULT_SELF_COEF
    opp_coef: tuple[float, float] = DEFAULT_OPP_COEF
    bye_bonus: tuple[float, float] = DEFAULT_BYE_BONUS
    noise_std: float = 0.0

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError(f"m (teams) must be >= 2, got {self.m}")
        if self.n < 1:
            raise ConfigError(f"n (subjects per team) must be >= 1, got {self.n}")
        if self.h < 1:
            raise ConfigError(f"h (days per week) must be >= 1, got {self.h}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        for name in ("intercept", "self_coef", "opp_coef", "bye_bonus"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 2:
                raise ConfigError(f"{name} needs one value per action, got {val}")
            object.__setattr__(self, name, val)

    def coefficient_arrays(self):
        return tuple(np.array(c, dtype=np.float64)
                     for c in (self.intercept, self.self_coef, self.opp_coef, self.bye_bonus))


@dataclass
class CohortState:
    s: np.ndarray
    t: int = 0

    def week(self, h: int) -> int:
        return week_of(self.t, h)


def week_of(t: int, h: int) -> int:
    return t // h


def beta(t: int, h: int) -> int:
    """Termination indicator: 1 at the first day of every week, else 0."""
    if t < 0:
        raise ContractError(f"timestep must be >= 0, got {t}")
    return 1 if t % h == 0 else 0


def reset(params: EnvParams, seed=None) -> CohortState:
    rng = np.random.default_rng(seed)
    return CohortState(rng.standard_normal((params.m, params.n)), 0)


def _check_action(action, shape) -> np.ndarray:
    a = np.asarray(action)
    if a.shape != shape:
        raise ContractError(f"action shape {a.shape} does not match state shape {shape}")
    if not np.all((a == 0) | (a == 1)):
        raise ContractError("action entries must be 0 or 1")
    return a.astype(np.int64)


def step(state: CohortState, pairing: Pairing, action, params: EnvParams,
         rng: np.random.Generator | None = None):
    """Advance one day; returns ``(next_state, rewards)`` with rewards == next states."""
    if pairing.m != params.m or state.s.shape != (params.m, params.n):
        raise ContractError(
            f"pairing covers {pairing.m} teams, state is {state.s.shape}, params say {(params.m, params.n)}"
        )
    a = _check_action(action, state.s.shape)
    nxt = _kernels.env_step(
        np.ascontiguousarray(state.s, dtype=np.float64), pairing.opponents(), a,
        *params.coefficient_arrays(),
    )
    if params.noise_std > 0:
        if rng is None:
            raise ContractError("noise_std > 0 requires an rng")
        nxt = nxt + params.noise_std * rng.standard_normal(nxt.shape)
    return CohortState(nxt, state.t + 1), nxt.copy()


class TeamCompetitionEnv:
    """Stateful convenience wrapper owning one rollout's state and noise stream."""

    def __init__(self, params: EnvParams, seed=None):
        self.params = params
        reset_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
        self.reset_rng = np.random.default_rng(reset_seq)
        self.noise_rng = np.random.default_rng(noise_seq)
        self.state: CohortState | None = None

    def reset(self, initial: np.ndarray | None = None) -> CohortState:
        if initial is None:
            s = self.reset_rng.standard_normal((self.params.m, self.params.n))
        else:
            s = np.array(initial, dtype=np.float64)
            if s.shape != (self.params.m, self.params.n):
                raise ContractError(f"initial state shape {s.shape} != {(self.params.m, self.params.n)}")
        self.state = CohortState(s, 0)
        return self.state

    def step(self, pairing: Pairing, action):
        self.state, rewards = step(self.state, pairing, action, self.params, self.noise_rng)
        return self.state, rewards


# ---------------------------------------------------------------------------
# trajectory export (JSON lines)
# ---------------------------------------------------------------------------

def trajectory_line(t: int, h: int, pairing: Pairing, state, action, reward) -> str:
    """One JSON-lines record: ``{t, week, pairing, state, action, reward}``.

    ``state`` is the matrix the action was taken in, ``reward`` the resulting
    per-subject rewards; ``pairing`` uses the ``"0-1,2-3"`` text form.
    """
    rec = {
        "t": int(t),
        "week": week_of(t, h),
        "pairing": str(pairing),
        "state": np.asarray(state, dtype=float).tolist(),
        "action": np.asarray(action, dtype=int).tolist(),
        "reward": np.asarray(reward, dtype=float).tolist(),
    }
    return json.dumps(rec, separators=(",", ":"))


@dataclass
class TrajectoryWriter:
    fh: IO[str]
    h: int
    count: int = field(default=0)

    def write(self, t, pairing, state, action, reward):
        self.fh.write(trajectory_line(t, self.h, pairing, state, action, reward) + "\n")
        self.count += 1


def read_trajectory(lines: Iterable[str]) -> list[dict]:
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        rec["pairing"] = Pairing.parse(rec["pairing"])
        for key in ("state", "reward"):
            rec[key] = np.asarray(rec[key], dtype=np.float64)
        rec["action"] = np.asarray(rec["action"], dtype=np.int64)
        out.append(rec)
    return out
