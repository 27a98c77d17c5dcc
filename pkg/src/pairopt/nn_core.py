"""Explicit-gradient neural-network substrate.

Everything here works on float64 numpy arrays.  An MLP is a sequence of dense
layers ``y = act(x @ W + b)`` whose weights live in a :class:`ParamStore`
under ``"<prefix>/W<i>"`` and ``"<prefix>/b<i>"``.  Forward passes return a
cache that the matching backward pass consumes; backward passes accumulate
into the store's gradient buffers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, StaleCacheError

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "activations", tuple(self.activations))
        widths = self.widths
        if any(w < 1 for w in widths):
            raise ConfigError(f"all MLP widths must be >= 1, got {widths}")
        if len(self.activations) != len(widths) - 1:
            raise ConfigError(
                f"need one activation per layer ({len(widths) - 1}), got {len(self.activations)}"
            )
        bad = [a for a in self.activations if a not in _ACTIVATIONS]
        if bad:
            raise ConfigError(f"unknown activation(s) {bad}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.out_dim)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def layer_shapes(self):
        w = self.widths
        return [((w[i], w[i + 1]), (w[i + 1],)) for i in range(self.n_layers)]

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "hidden": list(self.hidden),
            "out_dim": self.out_dim,
            "activations": list(self.activations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(int(d["in_dim"]), tuple(d["hidden"]), int(d["out_dim"]), tuple(d["activations"]))


def encoder_spec(in_dim: int = 1, width: int = 2, depth: int = 2) -> MlpSpec:
    """``in_dim -> width -> ... -> width`` with ReLU after every layer."""
    return MlpSpec(in_dim, (width,) * (depth - 1), width, (RELU,) * depth)


class ParamStore:
    """Named float64 parameter segments with a parallel gradient buffer.

    ``version`` increments on every optimizer step; caches record it so a
    backward pass against updated weights is caught.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.version = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ConfigError(f"duplicate segment name {name!r}")
        arr = np.array(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()]) if self.params else np.zeros(0)

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads.values()]) if self.grads else np.zeros(0)

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params():
            raise ConfigError(f"flat vector has {vec.size} entries, store has {self.n_params()}")
        off = 0
        for p in self.params.values():
            p[...] = vec[off:off + p.size].reshape(p.shape)
            off += p.size
        self.version += 1

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(p))) for p in self.params.values() if p.size), default=0.0)

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, v in self.params.items():
            out.add(k, v.copy())
        return out

    def subset(self, prefix: str) -> "ParamStore":
        out = ParamStore()
        for k, v in self.params.items():
            if k.startswith(prefix):
                out.add(k, v.copy())
        return out

    def equal(self, other: "ParamStore") -> bool:
        if list(self.params) != list(other.params):
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

INIT_SCHEMES = ("relu_safe", "uniform")


def init_mlp(store: ParamStore, prefix: str, spec: MlpSpec, rng: np.random.Generator,
             scheme: str = "relu_safe", nonneg_input: bool = False):
    """Draw ``|W| ~ U(0, sqrt(1/fan_in))`` per layer with zero biases.

    ``"uniform"`` uses symmetric signs everywhere.  ``"relu_safe"`` keeps
    narrow ReLU stacks alive: a ReLU layer reading signed input gets
    alternating column signs (one unit per half-line), a ReLU layer reading
    non-negative input (the output of a previous ReLU, or ``nonneg_input``)
    gets positive weights, and identity-activated layers stay symmetric.
    """
    if scheme not in INIT_SCHEMES:
        raise ConfigError(f"init scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
    signed_input = not nonneg_input
    for i, (wshape, bshape) in enumerate(spec.layer_shapes()):
        bound = np.sqrt(1.0 / wshape[0])
        relu = spec.activations[i] == RELU
        if scheme == "uniform" or not relu:
            W = rng.uniform(-bound, bound, size=wshape)
        else:
            W = rng.uniform(0.0, bound, size=wshape)
            if signed_input:
                W[:, 1::2] *= -1.0
        store.add(f"{prefix}/W{i}", W)
        store.add(f"{prefix}/b{i}", np.zeros(bshape))
        signed_input = not relu


@dataclass
class MlpCache:
    prefix: str
    spec: MlpSpec
    version: int
    squeeze: bool
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)


def _check_layout(store: ParamStore, prefix: str, spec: MlpSpec):
    for i, (wshape, bshape) in enumerate(spec.layer_shapes()):
        for name, shape in ((f"{prefix}/W{i}", wshape), (f"{prefix}/b{i}", bshape)):
            if name not in store:
                raise ConfigError(f"missing parameter segment {name!r}")
            if store[name].shape != shape:
                raise ConfigError(f"segment {name!r} has shape {store[name].shape}, expected {shape}")


def mlp_forward(spec: MlpSpec, store: ParamStore, prefix: str, x, check: bool = True):
    """Forward pass on a single vector ``(in_dim,)`` or a batch ``(B, in_dim)``."""
    X = np.asarray(x, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.in_dim:
        raise ConfigError(f"{prefix}: input width {X.shape[-1]} != spec in_dim {spec.in_dim}")
    if check:
        _check_layout(store, prefix, spec)
    cache = MlpCache(prefix, spec, store.version, squeeze)
    h = np.ascontiguousarray(X)
    for i, act in enumerate(spec.activations):
        W = store.params[f"{prefix}/W{i}"]
        b = store.params[f"{prefix}/b{i}"]
        cache.inputs.append(h)
        z, h = _kernels.dense_forward(h, W, b, act == RELU)
        cache.pre.append(z)
    return (h[0] if squeeze else h), cache


def mlp_backward(cache: MlpCache, store: ParamStore, upstream):
    """Accumulate parameter gradients and return d(loss)/d(input)."""
    if cache.version != store.version:
        raise StaleCacheError(
            f"{cache.prefix}: cache from parameter version {cache.version}, store is at {store.version}"
        )
    g = np.asarray(upstream, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    g = np.ascontiguousarray(g)
    expected = (cache.pre[-1].shape[0], cache.spec.out_dim)
    if g.shape != expected:
        raise StaleCacheError(f"{cache.prefix}: upstream gradient shape {g.shape} != {expected}")
    for i in reversed(range(cache.spec.n_layers)):
        name_w, name_b = f"{cache.prefix}/W{i}", f"{cache.prefix}/b{i}"
        g = _kernels.dense_backward(
            cache.inputs[i], store.params[name_w], cache.pre[i], g,
            cache.spec.activations[i] == RELU, store.grads[name_w], store.grads[name_b],
        )
    return g[0] if cache.squeeze else g


# ---------------------------------------------------------------------------
# pooling / softmax
# ---------------------------------------------------------------------------

def mean_pool(vectors: Sequence) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.size == 0 or arr.shape[0] == 0:
        raise ConfigError("mean_pool of an empty set; use the zero embedding instead")
    if arr.ndim != 2:
        raise ConfigError("mean_pool needs a list of equal-length vectors")
    return arr.sum(axis=0) / arr.shape[0]


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax received non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("log_softmax received non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimState:
    lr: float
    kind: str = "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer kind must be 'sgd' or 'adam', got {self.kind!r}")


def optimizer_step(store: ParamStore, opt: OptimState) -> ParamStore:
    """Descend along the accumulated gradients, then zero them.

    An all-zero gradient is a no-op, moment buffers included.
    """
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in segment {name!r}")
    if not any(np.any(g) for g in store.grads.values()):
        return store
    if opt.kind == "sgd":
        for name, p in store.params.items():
            p -= opt.lr * store.grads[name]
    else:
        opt.step_count += 1
        c1 = 1.0 - opt.beta1 ** opt.step_count
        c2 = 1.0 - opt.beta2 ** opt.step_count
        for name, p in store.params.items():
            g = store.grads[name]
            m = opt.m.setdefault(name, np.zeros_like(p))
            v = opt.v.setdefault(name, np.zeros_like(p))
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    for name, p in store.params.items():
        if not np.all(np.isfinite(p)):
            raise NumericError(f"segment {name!r} became non-finite after the update")
    store.zero_grad()
    store.version += 1
    return store


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in store.grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(store: ParamStore, loss_fn: Callable[[ParamStore], float], step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(store)`` must return the loss and accumulate its gradient into
    ``store.grads``.  The error per parameter is
    ``|analytic - fd| / max(1, |fd|)``.
    """
    store.zero_grad()
    loss_fn(store)
    analytic = store.flat_grad()
    base = store.flat()
    worst = 0.0
    for k in range(base.size):
        plus = base.copy()
        plus[k] += step
        store.set_flat(plus)
        f_plus = loss_fn(store)
        minus = base.copy()
        minus[k] -= step
        store.set_flat(minus)
        f_minus = loss_fn(store)
        fd = (f_plus - f_minus) / (2.0 * step)
        worst = max(worst, abs(analytic[k] - fd) / max(1.0, abs(fd)))
    store.set_flat(base)
    store.zero_grad()
    return worst


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def store_to_json(store: ParamStore, specs: dict[str, MlpSpec] | None = None) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": {k: s.to_dict() for k, s in (specs or {}).items()},
        "segments": {
            name: {"shape": list(p.shape), "values": [float(x) for x in p.ravel()]}
            for name, p in store.params.items()
        },
    }
    return json.dumps(doc, indent=1)


def store_from_json(text: str) -> tuple[ParamStore, dict[str, MlpSpec]]:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {doc.get('format_version')!r}")
    store = ParamStore()
    for name, seg in doc["segments"].items():
        shape = tuple(seg["shape"])
        values = np.asarray(seg["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ConfigError(f"segment {name!r}: {values.size} values for shape {shape}")
        store.add(name, values.reshape(shape))
    specs = {k: MlpSpec.from_dict(v) for k, v in doc.get("spec", {}).items()}
    return store, specs
