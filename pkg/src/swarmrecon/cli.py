"""Command-line pipeline: train experts, record demonstration pools, train
imitation learners, and evaluate checkpoints.

Every command consumes one root --seed (all internal randomness flows from
it through named streams), writes its artifacts into a run directory, and
records a manifest there before any long-running work starts. Exit codes:
0 success, 2 configuration errors, 3 precondition failures, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .baselines import BcModel, bc_select, train_airl, train_bc
from .demos import generate_demos, load_pool, save_pool, train_expert
from .evaluation import RANDOM, SEEN, coverage, evaluate, normalize
from .gridworld import (
    ConfigError,
    SampleFromDemos,
    ScenarioConfig,
    UniformRandom,
    load_scenario_config,
)
from .magail import GailSchedule, REWARD_CONFUSION, REWARD_MODES, train_magail
from .mlp import DivergenceError, load_checkpoint, save_checkpoint
from .ppo import GREEDY, PpoConfig, SAMPLE, SharedPolicy
from .rollout import policy_select, random_select
from .runio import read_json, sha256_file, write_csv, write_json
from .seeding import named_rng
from .trajectory import TrajectoryError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_DIVERGED = 4

OUT_ENV_VAR = "SWARMRECON_OUT"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        base = Path(os.environ.get(OUT_ENV_VAR, "runs"))
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        out = base / f"{args.command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


class Manifest:
    """Run manifest written atomically before work starts and finalized after."""

    def __init__(self, out_dir: Path, args, config_payload: dict, inputs: "list[str]"):
        self.path = out_dir / "manifest.json"
        self.doc = {
            "command": args.command,
            "argv": sys.argv[1:],
            "seed": getattr(args, "seed", None),
            "config": config_payload,
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": [],
            "package_version": __version__,
            "started_at": _now(),
            "finished_at": None,
        }
        write_json(self.path, self.doc)

    def add_output(self, path: Path) -> None:
        self.doc["outputs"].append(str(path))

    def finish(self) -> None:
        self.doc["finished_at"] = _now()
        write_json(self.path, self.doc)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _scenario_from_checkpoint(meta: dict) -> ScenarioConfig:
    if "scenario" not in meta:
        raise ConfigError("checkpoint metadata carries no scenario block")
    return ScenarioConfig.from_dict(meta["scenario"])


def _load_policy_checkpoint(path: Path):
    networks, meta = load_checkpoint(path)
    kind = meta.get("model_kind")
    if kind in ("shared_policy", "airl"):
        policy = SharedPolicy(actor=networks["actor"], critic=networks["critic"])
        return policy, meta
    raise ConfigError(f"checkpoint {path} holds {kind!r}, expected a shared policy")


def _load_actor(path: Path, mode: str):
    """Build a rollout selector from any checkpoint kind."""
    networks, meta = load_checkpoint(path)
    kind = meta.get("model_kind")
    config = _scenario_from_checkpoint(meta)
    if kind in ("shared_policy", "airl"):
        policy = SharedPolicy(actor=networks["actor"], critic=networks["critic"])
        return policy_select(policy, mode), config, meta
    if kind == "bc":
        nets = [networks[f"agent_{i}"] for i in range(len(networks))]
        return bc_select(BcModel(nets), mode), config, meta
    raise ConfigError(f"unknown model kind {kind!r} in {path}")


# --- subcommands -------------------------------------------------------------


def cmd_train_expert(args) -> int:
    config = load_scenario_config(_require_file(args.scenario, "scenario config"))
    if args.episodes < 1:
        raise ValueError("--episodes must be >= 1")
    out = _out_dir(args)
    manifest = Manifest(out, args, config.to_dict(), [args.scenario])
    ppo = PpoConfig()
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    def hook(episode: int, policy: SharedPolicy) -> None:
        save_checkpoint(
            ckpt_dir / f"expert_{episode:07d}.json",
            {"actor": policy.actor, "critic": policy.critic},
            _expert_meta(config, args, episode),
        )

    policy, log = train_expert(config, args.episodes, ppo, args.seed, checkpoint_hook=hook)
    diverged = bool(log) and log[-1].get("diverged")
    ckpt = out / "expert.json"
    save_checkpoint(
        ckpt,
        {"actor": policy.actor, "critic": policy.critic},
        _expert_meta(config, args, len(log)),
    )
    log_path = out / "training_log.csv"
    write_csv(log_path, log)
    manifest.add_output(ckpt)
    manifest.add_output(log_path)
    manifest.finish()
    print(f"wrote {ckpt} after {len(log)} episodes")
    if diverged:
        print("training diverged; checkpoint holds the last good parameters", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _expert_meta(config: ScenarioConfig, args, episodes: int) -> dict:
    return {
        "model_kind": "shared_policy",
        "scenario": config.to_dict(),
        "seed": args.seed,
        "episodes": episodes,
        "algo": "ps-mappo",
    }


def cmd_gen_demos(args) -> int:
    ckpt = _require_file(args.checkpoint, "expert checkpoint")
    policy, meta = _load_policy_checkpoint(ckpt)
    config = _scenario_from_checkpoint(meta)
    if args.scenario:
        file_config = load_scenario_config(_require_file(args.scenario, "scenario config"))
        if file_config.kind != config.kind:
            raise ConfigError(
                f"--scenario is {file_config.kind.value} but checkpoint was trained "
                f"on {config.kind.value}"
            )
        config = file_config
    if args.count < 1:
        raise ValueError("--count must be >= 1")
    out = _out_dir(args)
    manifest = Manifest(out, args, config.to_dict(), [args.checkpoint])
    pool = generate_demos(
        policy,
        config,
        count=args.count,
        epsilon=args.epsilon,
        rng_seed=args.seed,
        source=str(ckpt),
    )
    pool_path = out / "pool.jsonl"
    save_pool(pool, pool_path)
    manifest.add_output(pool_path)
    manifest.finish()
    print(f"wrote {pool_path} ({len(pool)} trajectories, epsilon={args.epsilon})")
    return EXIT_OK


def cmd_train_learner(args) -> int:
    pool_path = _require_file(args.pool, "demo pool")
    pool = load_pool(pool_path)
    config = pool.config
    if args.demos > len(pool):
        raise ValueError(f"--demos {args.demos} exceeds pool size {len(pool)}")
    demos = pool.subsample(args.demos, named_rng(args.seed, "demo-subsample"))
    out = _out_dir(args)
    manifest = Manifest(out, args, config.to_dict(), [args.pool])
    ppo = PpoConfig()
    schedule = GailSchedule.fit(args.episodes)
    meta = {
        "scenario": config.to_dict(),
        "seed": args.seed,
        "algo": args.algo,
        "demos": args.demos,
    }
    ckpt = out / "learner.json"
    if args.algo == "magail":
        policy, bank, log = train_magail(
            config, demos, schedule, ppo, args.seed, reward_mode=args.reward_mode
        )
        networks = {"actor": policy.actor, "critic": policy.critic}
        networks.update(
            {f"discriminator_{i}": d for i, d in enumerate(bank.discriminators)}
        )
        save_checkpoint(ckpt, networks, {**meta, "model_kind": "shared_policy"})
    elif args.algo == "airl":
        model, log = train_airl(demos, config, schedule, ppo, args.seed)
        save_checkpoint(
            ckpt,
            {
                "actor": model.policy.actor,
                "critic": model.policy.critic,
                "reward_net": model.reward_net,
            },
            {**meta, "model_kind": "airl"},
        )
    else:  # bc
        model, log = train_bc(demos, config, epochs=args.bc_epochs, rng_seed=args.seed)
        save_checkpoint(
            ckpt,
            {f"agent_{i}": net for i, net in enumerate(model.networks)},
            {**meta, "model_kind": "bc", "epochs": args.bc_epochs},
        )
    log_path = out / "training_log.csv"
    write_csv(log_path, log)
    manifest.add_output(ckpt)
    manifest.add_output(log_path)
    manifest.finish()
    print(f"wrote {ckpt} ({args.algo}, {args.demos} demos)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    mode = GREEDY if args.greedy else SAMPLE
    pool = None
    if args.pool:
        pool = load_pool(_require_file(args.pool, "demo pool"))
    if args.random_policy:
        if pool is None and not args.scenario:
            raise ConfigError("--random-policy needs --scenario or --pool for the scenario")
        config = (
            pool.config
            if pool is not None
            else load_scenario_config(_require_file(args.scenario, "scenario config"))
        )
        select = random_select()
        meta = {"model_kind": "random"}
        inputs = [p for p in (args.pool,) if p]
    else:
        if not args.checkpoint:
            raise ConfigError("provide --checkpoint or --random-policy")
        ckpt = _require_file(args.checkpoint, "checkpoint")
        select, config, meta = _load_actor(ckpt, mode)
        inputs = [args.checkpoint] + ([args.pool] if args.pool else [])
    if args.init == SEEN:
        if pool is None:
            raise ConfigError("seen-start evaluation requires --pool")
        init = SampleFromDemos(pool.initial_positions())
    else:
        init = UniformRandom()

    out = _out_dir(args)
    manifest = Manifest(out, args, config.to_dict(), inputs)
    report = evaluate(select, config, args.episodes, init, args.seed, init_label=args.init)

    eval_path = out / "eval.csv"
    write_csv(eval_path, report.to_rows())
    summary_path = out / "summary.json"
    summary = report.summary()
    summary["manifest"] = str(manifest.path)
    write_json(summary_path, summary)
    manifest.add_output(eval_path)
    manifest.add_output(summary_path)

    if args.normalize:
        expert_summary = read_json(_require_file(args.normalize[0], "expert anchor summary"))
        random_summary = read_json(_require_file(args.normalize[1], "random anchor summary"))
        normalized = normalize(report, expert_summary["mean"], random_summary["mean"])
        norm_csv = out / "eval_normalized.csv"
        write_csv(norm_csv, normalized.to_rows())
        norm_summary = normalized.summary()
        norm_summary["manifest"] = str(manifest.path)
        norm_path = out / "summary_normalized.json"
        write_json(norm_path, norm_summary)
        manifest.add_output(norm_csv)
        manifest.add_output(norm_path)

    if args.coverage:
        trace = coverage(
            select, config, episodes=args.coverage, init=init, rng_seed=args.seed,
            init_label=args.init,
        )
        cov_path = out / "coverage.csv"
        grid_path = out / "coverage_grid.csv"
        write_csv(cov_path, trace.to_rows())
        write_csv(grid_path, trace.grid_rows())
        manifest.add_output(cov_path)
        manifest.add_output(grid_path)
        print(f"coverage: {trace.distinct_cells()} distinct cells over {args.coverage} episodes")

    manifest.finish()
    print(
        f"evaluated {args.episodes} episodes ({args.init} starts): "
        f"median reward {summary['median']:.3f}"
    )
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmrecon",
        description="Swarm behavior reconstruction pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-expert", help="train an expert policy on the true reward")
    p.add_argument("--scenario", required=True, help="scenario TOML file")
    p.add_argument("--episodes", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default from ${OUT_ENV_VAR})")
    p.set_defaults(func=cmd_train_expert)

    p = sub.add_parser("gen-demos", help="record a demonstration pool from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="expert checkpoint JSON")
    p.add_argument("--scenario", help="optional scenario TOML override")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train-learner", help="train an imitation learner from a pool")
    p.add_argument("--algo", choices=("magail", "bc", "airl"), required=True)
    p.add_argument("--pool", required=True, help="demo pool JSONL")
    p.add_argument("--demos", type=int, default=400, help="trajectories to subsample")
    p.add_argument("--episodes", type=int, default=10_000, help="adversarial training episodes")
    p.add_argument("--bc-epochs", type=int, default=200)
    p.add_argument("--reward-mode", choices=REWARD_MODES, default=REWARD_CONFUSION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_learner)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on true rewards")
    p.add_argument("--checkpoint", help="policy/BC checkpoint JSON")
    p.add_argument("--random-policy", action="store_true", help="evaluate uniform-random actions")
    p.add_argument("--init", choices=(SEEN, RANDOM), default=RANDOM)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--pool", help="demo pool (required for --init seen)")
    p.add_argument("--scenario", help="scenario TOML (only needed with --random-policy and no pool)")
    p.add_argument("--greedy", action="store_true", help="argmax actions instead of sampling")
    p.add_argument(
        "--normalize",
        nargs=2,
        metavar=("EXPERT_SUMMARY", "RANDOM_SUMMARY"),
        help="summary.json anchors; writes normalized outputs as well",
    )
    p.add_argument("--coverage", type=int, default=0, metavar="EPISODES",
                   help="also record a coverage trace over this many episodes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrajectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
