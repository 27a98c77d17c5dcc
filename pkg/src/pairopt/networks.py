"""Permutation-invariant policy and critic networks.

Policy: every subject is scored from three embeddings -- its own state, the
pooled states of its teammates and the pooled states of the opposing team --
each produced by its own shared encoder, then a small head maps the
concatenation to action logits.

Critic: a shared subject encoder (psi1) is sum-pooled into a team vector,
transformed per team (psi2), the two team vectors of a pair are added and
transformed (psi3), and a linear head (psi4) yields the pair's value.  The
value of a pairing is the sum of its pair values, so the greedy pairing is a
max-weight matching over the pair-value matrix.

Both networks evaluate the whole cohort in one batched pass; the single
subject / single pair functions below are straight-line versions used as
oracles in the tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn_core import (IDENTITY, INIT_SCHEMES, RELU, MlpSpec, ParamStore, encoder_spec, init_mlp,
                      log_softmax, mlp_backward, mlp_forward, softmax)
from .pairing import Pairing

log = logging.getLogger(__name__)

POLICY_SEGMENTS = ("self_enc", "mate_enc", "opp_enc", "head")
CRITIC_SEGMENTS = ("psi1", "psi2", "psi3", "psi4")
_POOLINGS = {"mixed": ("mean", "sum"), "mean": ("mean", "mean"), "sum": ("sum", "sum")}


@dataclass(frozen=True)
class NetConfig:
    state_dim: int = 1
    embed_width: int = 2
    encoder_depth: int = 2
    head_hidden: int = 4
    n_actions: int = 2
    # "mixed": mean-pooling in the policy, sum-pooling in the critic
    pooling: str = "mixed"
    init: str = "relu_safe"

    def __post_init__(self):
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"init must be one of {INIT_SCHEMES}, got {self.init!r}")
        if self.pooling not in _POOLINGS:
            raise ConfigError(f"pooling must be one of {sorted(_POOLINGS)}, got {self.pooling!r}")
        for name in ("state_dim", "embed_width", "encoder_depth", "head_hidden", "n_actions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def policy_pool(self) -> str:
        return _POOLINGS[self.pooling][0]

    @property
    def critic_pool(self) -> str:
        return _POOLINGS[self.pooling][1]


def _as_subjects(s: np.ndarray, state_dim: int) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if state_dim == 1 and s.ndim == 2:
        return s.reshape(-1, 1)
    if s.ndim == 3 and s.shape[2] == state_dim:
        return s.reshape(-1, state_dim)
    raise ConfigError(f"state of shape {s.shape} incompatible with state_dim {state_dim}")


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------

@dataclass
class PairContext:
    """Inputs of one subject's action distribution.

    On a bye week ``opponents`` is the subject's own full roster.
    """

    own: float | np.ndarray
    teammates: list = field(default_factory=list)
    opponents: list = field(default_factory=list)


@dataclass
class _PolicyCache:
    m: int
    n: int
    opp: np.ndarray
    c_self: object
    c_mate: object
    c_opp: object
    c_head: object
    probs: np.ndarray


class PolicyNet:
    def __init__(self, cfg: NetConfig = NetConfig(), seed=None, store: ParamStore | None = None):
        self.cfg = cfg
        w = cfg.embed_width
        enc = encoder_spec(cfg.state_dim, w, cfg.encoder_depth)
        self.specs = {
            "self_enc": enc,
            "mate_enc": enc,
            "opp_enc": enc,
            "head": MlpSpec(3 * w, (cfg.head_hidden,), cfg.n_actions, (RELU, IDENTITY)),
        }
        if store is None:
            store = ParamStore()
            rng = np.random.default_rng(seed)
            for name in POLICY_SEGMENTS:
                init_mlp(store, name, self.specs[name], rng, cfg.init, nonneg_input=name == "head")
        self.store = store

    def _pool(self, total: np.ndarray, count: int) -> np.ndarray:
        return total / count if self.cfg.policy_pool == "mean" else total

    def forward(self, s: np.ndarray, opp: np.ndarray):
        """Logits ``(M, N, |A|)`` for every subject given opponents ``opp``."""
        s = np.asarray(s, dtype=np.float64)
        m, n = s.shape[:2]
        w = self.cfg.embed_width
        X = _as_subjects(s, self.cfg.state_dim)
        st = self.store
        e_self, c_self = mlp_forward(self.specs["self_enc"], st, "self_enc", X)
        e_mate, c_mate = mlp_forward(self.specs["mate_enc"], st, "mate_enc", X)
        e_opp, c_opp = mlp_forward(self.specs["opp_enc"], st, "opp_enc", X)
        e_mate = e_mate.reshape(m, n, w)
        if n > 1:
            mates = self._pool(e_mate.sum(axis=1)[:, None, :] - e_mate, n - 1)
        else:
            mates = np.zeros_like(e_mate)
        opp_team = self._pool(e_opp.reshape(m, n, w).sum(axis=1), n)
        rivals = np.broadcast_to(opp_team[opp][:, None, :], (m, n, w))
        hcat = np.concatenate([e_self.reshape(m, n, w), mates, rivals], axis=2).reshape(m * n, 3 * w)
        logits, c_head = mlp_forward(self.specs["head"], st, "head", hcat)
        probs = softmax(logits)
        cache = _PolicyCache(m, n, np.asarray(opp), c_self, c_mate, c_opp, c_head, probs)
        return logits.reshape(m, n, -1), cache

    def backward(self, cache: _PolicyCache, dlogits: np.ndarray):
        m, n, w = cache.m, cache.n, self.cfg.embed_width
        st = self.store
        dh = mlp_backward(cache.c_head, st, np.asarray(dlogits).reshape(m * n, -1))
        dh = dh.reshape(m, n, 3 * w)
        d_self, d_mates, d_rivals = dh[..., :w], dh[..., w:2 * w], dh[..., 2 * w:]
        mlp_backward(cache.c_self, st, d_self.reshape(m * n, w))
        if n > 1:
            d_mate = self._pool(d_mates.sum(axis=1)[:, None, :] - d_mates, n - 1)
        else:
            d_mate = np.zeros_like(d_mates)
        mlp_backward(cache.c_mate, st, d_mate.reshape(m * n, w))
        d_opp_team = np.zeros((m, w))
        np.add.at(d_opp_team, cache.opp, d_rivals.sum(axis=1))
        d_opp_team = self._pool(d_opp_team, n)
        d_opp = np.broadcast_to(d_opp_team[:, None, :], (m, n, w)).reshape(m * n, w)
        mlp_backward(cache.c_opp, st, d_opp)

    def probabilities(self, s: np.ndarray, pairing: Pairing) -> np.ndarray:
        logits, _ = self.forward(s, pairing.opponents())
        return softmax(logits)

    def sample(self, s: np.ndarray, pairing: Pairing, rng: np.random.Generator, greedy: bool = False):
        """Joint action ``(M, N)`` and the forward cache it was drawn from."""
        logits, cache = self.forward(s, pairing.opponents())
        probs = cache.probs.reshape(logits.shape)
        if greedy:
            return probs.argmax(axis=-1), cache
        cum = np.cumsum(probs, axis=-1)
        u = rng.random(probs.shape[:-1] + (1,))
        action = np.minimum((u >= cum).sum(axis=-1), probs.shape[-1] - 1)
        return action, cache

    def n_params(self) -> int:
        return self.store.n_params()


def policy_distribution(ctx: PairContext, net: PolicyNet) -> np.ndarray:
    """Action distribution of one subject, evaluated subject by subject."""
    st, sp = net.store, net.specs
    d = net.cfg.state_dim
    w = net.cfg.embed_width

    def enc(name, x):
        return mlp_forward(sp[name], st, name, np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(d))[0]

    def pool(name, xs):
        if len(xs) == 0:
            return np.zeros(w)
        total = np.zeros(w)
        for x in xs:
            total = total + enc(name, x)
        return total / len(xs) if net.cfg.policy_pool == "mean" else total

    h = np.concatenate([enc("self_enc", ctx.own), pool("mate_enc", ctx.teammates), pool("opp_enc", ctx.opponents)])
    logits, _ = mlp_forward(sp["head"], st, "head", h)
    return softmax(logits)


def subject_context(s: np.ndarray, pairing: Pairing, team: int, subject: int) -> PairContext:
    s = np.asarray(s, dtype=np.float64)
    opp = int(pairing.opponents()[team])
    mates = [s[team, j] for j in range(s.shape[1]) if j != subject]
    return PairContext(s[team, subject], mates, list(s[opp]))


def joint_policy_logprob(s: np.ndarray, pairing: Pairing, action, net: PolicyNet,
                         grad_scale: float | None = None) -> float:
    """Sum over subjects of log pi(a_ij | context); optionally accumulate
    ``grad_scale * d/dtheta`` into the policy store's gradient buffers."""
    action = np.asarray(action, dtype=np.int64)
    logits, cache = net.forward(s, pairing.opponents())
    logp = log_softmax(logits)
    chosen = np.take_along_axis(logp, action[..., None], axis=-1)[..., 0]
    total = float(chosen.sum())
    if not np.isfinite(total):
        log.warning("joint log-probability is -inf: an action has zero probability")
        return -np.inf
    if grad_scale is not None:
        probs = cache.probs.reshape(logits.shape)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, action[..., None], 1.0, axis=-1)
        net.backward(cache, grad_scale * (onehot - probs))
    return total


def policy_entropy(probs: np.ndarray) -> float:
    p = np.asarray(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return float(terms.sum(axis=-1).mean())


# ---------------------------------------------------------------------------
# critic
# ---------------------------------------------------------------------------

@dataclass
class _CriticCache:
    m: int
    n: int
    c_psi1: object
    c_psi2: object
    emb: np.ndarray


class CriticNet:
    def __init__(self, cfg: NetConfig = NetConfig(), seed=None, store: ParamStore | None = None):
        self.cfg = cfg
        w = cfg.embed_width
        self.specs = {
            "psi1": encoder_spec(cfg.state_dim, w, cfg.encoder_depth),
            "psi2": encoder_spec(w, w, cfg.encoder_depth),
            "psi3": encoder_spec(w, w, cfg.encoder_depth),
            "psi4": MlpSpec(w, (), 1, (IDENTITY,)),
        }
        if store is None:
            store = ParamStore()
            rng = np.random.default_rng(seed)
            for name in CRITIC_SEGMENTS:
                init_mlp(store, name, self.specs[name], rng, cfg.init, nonneg_input=name != "psi1")
        self.store = store
        self.n_pair_evals = 0

    def team_embeddings(self, s: np.ndarray):
        s = np.asarray(s, dtype=np.float64)
        m, n = s.shape[:2]
        w = self.cfg.embed_width
        e1, c1 = mlp_forward(self.specs["psi1"], self.store, "psi1", _as_subjects(s, self.cfg.state_dim))
        team = e1.reshape(m, n, w).sum(axis=1)
        if self.cfg.critic_pool == "mean":
            team = team / n
        emb, c2 = mlp_forward(self.specs["psi2"], self.store, "psi2", team)
        return emb, _CriticCache(m, n, c1, c2, emb)

    def pair_values(self, emb: np.ndarray, left, right):
        left = np.asarray(left, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        self.n_pair_evals += left.size
        h3, c3 = mlp_forward(self.specs["psi3"], self.store, "psi3", emb[left] + emb[right])
        v, c4 = mlp_forward(self.specs["psi4"], self.store, "psi4", h3)
        return v[:, 0], (left, right, c3, c4)

    def backward(self, cache: _CriticCache, pair_cache, dvalues):
        left, right, c3, c4 = pair_cache
        st = self.store
        d3 = mlp_backward(c4, st, np.asarray(dvalues, dtype=np.float64).reshape(-1, 1))
        dsum = mlp_backward(c3, st, d3)
        demb = np.zeros_like(cache.emb)
        np.add.at(demb, left, dsum)
        np.add.at(demb, right, dsum)
        dteam = mlp_backward(cache.c_psi2, st, demb)
        if self.cfg.critic_pool == "mean":
            dteam = dteam / cache.n
        w = self.cfg.embed_width
        d1 = np.broadcast_to(dteam[:, None, :], (cache.m, cache.n, w)).reshape(-1, w)
        mlp_backward(cache.c_psi1, st, d1)

    def q_forward(self, s: np.ndarray, pairing: Pairing):
        """Q of a pairing plus the cache needed by :meth:`q_backward`."""
        emb, cache = self.team_embeddings(s)
        pairs = np.asarray(pairing.pairs, dtype=np.int64)
        v, pcache = self.pair_values(emb, pairs[:, 0], pairs[:, 1])
        total = 0.0
        for x in v:
            total += float(x)
        return total, (cache, pcache, v.shape)

    def q_backward(self, ctx, grad_scale: float):
        """Accumulate ``grad_scale * dQ/dpsi`` into the critic store."""
        cache, pcache, shape = ctx
        self.backward(cache, pcache, np.full(shape, float(grad_scale)))

    def q(self, s: np.ndarray, pairing: Pairing, grad_scale: float | None = None) -> float:
        total, ctx = self.q_forward(s, pairing)
        if grad_scale is not None:
            self.q_backward(ctx, grad_scale)
        return total

    def value_matrix(self, s: np.ndarray, allow_byes: bool = False) -> np.ndarray:
        emb, _ = self.team_embeddings(s)
        m = emb.shape[0]
        left, right = np.triu_indices(m, k=0 if allow_byes else 1)
        v, _ = self.pair_values(emb, left, right)
        out = np.zeros((m, m))
        out[left, right] = v
        out[right, left] = v
        return out

    def n_params(self) -> int:
        return self.store.n_params()


def pair_value(team_a, team_b, net: CriticNet) -> float:
    """Value of one pair, composed stage by stage from the two rosters."""
    st, sp = net.store, net.specs
    d = net.cfg.state_dim

    def team_vec(states):
        total = np.zeros(net.cfg.embed_width)
        for x in states:
            total = total + mlp_forward(sp["psi1"], st, "psi1", np.atleast_1d(np.asarray(x, float)).reshape(d))[0]
        if net.cfg.critic_pool == "mean":
            total = total / len(states)
        return mlp_forward(sp["psi2"], st, "psi2", total)[0]

    if len(team_a) == 0 or len(team_b) == 0:
        raise ConfigError("pair_value needs two non-empty teams")
    h = mlp_forward(sp["psi3"], st, "psi3", team_vec(team_a) + team_vec(team_b))[0]
    return float(mlp_forward(sp["psi4"], st, "psi4", h)[0][0])


def pair_value_matrix(s: np.ndarray, net: CriticNet, allow_byes: bool = False) -> np.ndarray:
    """Symmetric matrix of pair values; the diagonal holds bye values when enabled, else 0."""
    return net.value_matrix(s, allow_byes)


def q_omega(s: np.ndarray, pairing: Pairing, net: CriticNet) -> float:
    return net.q(s, pairing)
