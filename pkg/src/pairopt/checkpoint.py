"""Checkpoint persistence for a policy/critic pair (nn_core JSON layout)."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .errors import CheckpointError, ConfigError
from .networks import CRITIC_SEGMENTS, POLICY_SEGMENTS, CriticNet, NetConfig, PolicyNet
from .nn_core import FORMAT_VERSION, ParamStore, store_from_json


def checkpoint_json(policy: PolicyNet, critic: CriticNet) -> str:
    segments = {}
    for store in (policy.store, critic.store):
        for name, p in store.params.items():
            segments[name] = {"shape": list(p.shape), "values": [float(x) for x in p.ravel()]}
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": {k: s.to_dict() for k, s in {**policy.specs, **critic.specs}.items()},
        "net_config": asdict(policy.cfg),
        "segments": segments,
    }
    return json.dumps(doc, indent=1)


def save_checkpoint(path, policy: PolicyNet, critic: CriticNet):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint_json(policy, critic))


def _split(store: ParamStore, prefixes) -> ParamStore:
    out = ParamStore()
    for name, p in store.params.items():
        if name.split("/", 1)[0] in prefixes:
            out.add(name, p)
    return out


def load_checkpoint(path) -> tuple[PolicyNet, CriticNet]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        store, _ = store_from_json(text)
        cfg = NetConfig(**json.loads(text).get("net_config", {}))
    except (ValueError, KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    policy = PolicyNet(cfg, store=_split(store, POLICY_SEGMENTS))
    critic = CriticNet(cfg, store=_split(store, CRITIC_SEGMENTS))
    # validate every segment against a freshly built layout
    for net, cls in ((policy, PolicyNet), (critic, CriticNet)):
        ref = cls(cfg, seed=0).store
        for name, p in ref.params.items():
            if name not in net.store:
                raise CheckpointError(f"checkpoint {path} is missing segment {name!r}")
            if net.store[name].shape != p.shape:
                raise CheckpointError(
                    f"checkpoint {path}: segment {name!r} has shape {net.store[name].shape}, expected {p.shape}"
                )
    return policy, critic
