"""Command-line front end: ``pairopt {train,evaluate,compare,pairings,gradcheck,reproduce}``.

Exit codes: 0 success, 1 other failure, 2 configuration error, 3 checkpoint
error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, run_config_load
from .env import TrajectoryWriter
from .errors import CheckpointError, ConfigError, NumericError, PairoptError
from .evaluation import Comparison, PolicySpec, compare, evaluate, rollout
from .networks import CriticNet, PolicyNet, joint_policy_logprob
from .nn_core import grad_check
from .option_critic import LearnerState, train, write_metrics_csv
from .pairing import count_pairings, enumerate_pairings, random_pairing, solve_matching

log = logging.getLogger("pairopt")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _load_config(args) -> RunConfig:
    cfg = run_config_load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _emit(text: str, out: str | None, name: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix == "":
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _train_one(cfg: RunConfig, out_dir: Path | None, resume: str | None):
    learner = None
    if resume:
        policy, critic = load_checkpoint(resume)
        learner = LearnerState.initial(cfg.train_config(), cfg.net_config())
        learner.policy, learner.critic = policy, critic

    def checkpoint_cb(state: LearnerState, row: dict):
        if cfg.checkpoint_every and out_dir is not None and state.iteration % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_{state.iteration:06d}.json", state.policy, state.critic)

    return train(cfg.env_params(), cfg.train_config(), cfg.net_config(), learner, checkpoint_cb)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    learner, metrics = _train_one(cfg, out, args.checkpoint)
    save_checkpoint(out / "checkpoint.json", learner.policy, learner.critic)
    (out / "config.txt").write_text(cfg.to_text())
    if args.format == "json":
        (out / "metrics.json").write_text(json.dumps(metrics))
    else:
        write_metrics_csv(out / "metrics.csv", metrics)
    last = metrics[-1] if metrics else {}
    print(f"trained {len(metrics)} iterations; final td_error={last.get('td_error', float('nan')):.6g}; "
          f"checkpoint {out / 'checkpoint.json'}")
    return EXIT_OK


def _spec_from_args(args, cfg: RunConfig) -> PolicySpec:
    if args.policy == "trained":
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for a trained policy")
        return PolicySpec("trained", pairing="greedy", checkpoint=args.checkpoint,
                          greedy_actions=cfg.eval_greedy_actions)
    return PolicySpec(args.policy, pairing=cfg.baseline_pairing, checkpoint=args.checkpoint)


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_args(args, cfg).resolve()
    env = cfg.env_params()
    if args.trajectory:
        with open(args.trajectory, "w") as fh:
            rollout(spec, env, cfg.eval_horizon, cfg.seed, 0, cfg.allow_byes, writer=TrajectoryWriter(fh, env.h))
    report = evaluate(spec, env, cfg.eval_horizon, cfg.gamma, cfg.eval_repetitions, cfg.seed, cfg.allow_byes)
    if args.format == "json":
        _emit(report.to_json() + "\n", args.out, "report.json")
    else:
        rows = [{"repetition": k, "average_reward": a, "discounted_cumulative_reward": d}
                for k, (a, d) in enumerate(zip(report.avg_reward, report.discounted))]
        _emit(_rows_csv(rows), args.out, "report.csv")
    return EXIT_OK


def _comparison(cfg: RunConfig, policy=None, critic=None, checkpoint=None) -> Comparison:
    trained = PolicySpec("trained", pairing="greedy", checkpoint=checkpoint, policy=policy, critic=critic,
                         greedy_actions=cfg.eval_greedy_actions)
    specs = [trained]
    for kind in ("fixed0", "fixed1", "random"):
        specs.append(PolicySpec(kind, pairing=cfg.baseline_pairing, policy=policy, critic=critic,
                                checkpoint=checkpoint))
    return compare(specs, cfg.env_params(), cfg.eval_horizon, cfg.gamma, cfg.eval_repetitions,
                   cfg.seed, cfg.allow_byes)


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for compare")
    result = _comparison(cfg, checkpoint=args.checkpoint)
    print(result.table())
    if args.out:
        text = result.to_json() if args.format == "json" else _rows_csv(result.rows())
        _emit(text, args.out, f"comparison.{args.format}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    """Train once per seed and compare against the baselines under each seed."""
    cfg = _load_config(args)
    out = Path(args.out) if args.out else None
    means: dict[str, list[float]] = {}
    wins = 0
    for seed in range(cfg.seed, cfg.seed + args.seeds):
        run_cfg = cfg.replace(seed=seed)
        learner, metrics = _train_one(run_cfg, None, None)
        result = _comparison(run_cfg, learner.policy, learner.critic)
        for rep in result.reports:
            means.setdefault(rep.name, []).append(rep.mean_avg_reward)
        wins += result.ranking()[0].name == "proposed"
        print(f"seed {seed}: best = {result.ranking()[0].name}")
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(out / f"checkpoint_seed{seed}.json", learner.policy, learner.critic)
            write_metrics_csv(out / f"metrics_seed{seed}.csv", metrics)
            (out / f"comparison_seed{seed}.json").write_text(result.to_json())
    print(f"proposed ranked first in {wins}/{args.seeds} seeds")
    for name, vals in sorted(means.items(), key=lambda kv: -np.mean(kv[1])):
        print(f"{name:<10} mean average reward over seeds {np.mean(vals):.6g}")
    return EXIT_OK


def cmd_pairings(args) -> int:
    if args.values:
        try:
            values = np.asarray(json.loads(Path(args.values).read_text()), dtype=np.float64)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read value matrix {args.values}: {exc}") from exc
        best, score = solve_matching(values, args.byes)
        if args.format == "json":
            print(json.dumps({"pairing": str(best), "score": score}))
        else:
            print(f"pairing,score\n{best},{score!r}")
        return EXIT_OK
    m = args.teams
    if m is None:
        raise ConfigError("give --teams or --values")
    if args.random:
        print(random_pairing(m, args.byes, args.seed))
        return EXIT_OK
    print(f"# {count_pairings(m, args.byes)} pairings of {m} teams")
    for k, p in enumerate(enumerate_pairings(m, args.byes)):
        if args.limit and k >= args.limit:
            break
        print(p)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seed
    rng = np.random.default_rng(seed)
    net_cfg = cfg.net_config()
    policy, critic = PolicyNet(net_cfg, seed=rng), CriticNet(net_cfg, seed=rng)
    m = cfg.m if cfg.m % 2 == 0 or cfg.allow_byes else cfg.m + 1
    s = rng.standard_normal((m, cfg.n))
    pairing = random_pairing(m, cfg.allow_byes, rng)
    action = rng.integers(0, 2, size=s.shape)
    errors = {
        "joint_policy_logprob": grad_check(
            policy.store, lambda st: joint_policy_logprob(s, pairing, action, policy, grad_scale=1.0)),
        "q_omega": grad_check(critic.store, lambda st: critic.q(s, pairing, grad_scale=1.0)),
    }
    for name, err in errors.items():
        print(f"{name:<22} max relative error {err:.3e}")
    return EXIT_OK if max(errors.values()) < args.tol else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairopt", description="Team pairing with option-critic learning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--config", help="key = value run configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--checkpoint", help="checkpoint JSON to load")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("train", help="train policy and critic, write checkpoint and metrics")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate one policy")
    common(p)
    p.add_argument("--policy", choices=("trained", "fixed0", "fixed1", "random"), default="trained")
    p.add_argument("--trajectory", help="write repetition 0 as JSON lines")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="rank a trained policy against the baselines")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", help="train and compare over several seeds")
    common(p)
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("pairings", help="enumerate, sample or solve pairings")
    p.add_argument("--teams", type=int)
    p.add_argument("--byes", action="store_true")
    p.add_argument("--values", help="JSON square matrix of pair values to solve")
    p.add_argument("--random", action="store_true", help="print one uniformly random pairing")
    p.add_argument("--seed", type=int)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_pairings)

    p = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    common(p, fmt=False)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NumericError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PairoptError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
