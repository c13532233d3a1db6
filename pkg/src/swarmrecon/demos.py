"""Expert training and demonstration pools.

Experts are trained with parameter-shared PPO on the true scenario reward.
A demonstration pool is a set of recorded trajectories rolled out by a
trained expert whose optimality is degraded by per-step action noise
(epsilon=0 optimal, epsilon=1 uniform random). Pools persist as JSON-lines
plus a sidecar manifest and are re-validated against the transition rule on
load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridworld import ScenarioConfig, UniformRandom, InitMode
from .mlp import DivergenceError
from .ppo import (
    PpoConfig,
    PpoOptimizer,
    RolloutBuffer,
    SAMPLE,
    SharedPolicy,
    make_shared_policy,
    ppo_update,
)
from .rollout import epsilon_noisy, play_episode, policy_select
from .runio import sha256_file, write_json
from .seeding import named_rng
from .trajectory import (
    Trajectory,
    TrajectoryError,
    replay_check,
    trajectory_from_record,
    trajectory_to_record,
)

POOL_FORMAT_VERSION = 1


@dataclass
class DemoPool:
    trajectories: list[Trajectory]
    epsilon: float
    source: str
    config: ScenarioConfig

    def __len__(self) -> int:
        return len(self.trajectories)

    def initial_positions(self) -> tuple:
        """Joint starting positions of every trajectory (for seen-start evaluation)."""
        return tuple(t.initial_state.agent_positions for t in self.trajectories)

    def subsample(self, count: int, rng: np.random.Generator) -> "DemoPool":
        """Uniform subsample without replacement, preserving pool order."""
        if count > len(self):
            raise ValueError(f"requested {count} demos from a pool of {len(self)}")
        idx = np.sort(rng.choice(len(self), size=count, replace=False))
        return DemoPool(
            trajectories=[self.trajectories[i] for i in idx],
            epsilon=self.epsilon,
            source=self.source,
            config=self.config,
        )

    def mean_true_reward(self) -> float:
        """Mean over trajectories of the episode's per-agent mean total reward."""
        return float(
            np.mean([t.total_reward().mean() for t in self.trajectories])
        )


def train_expert(
    config: ScenarioConfig,
    episodes: int,
    ppo: PpoConfig,
    rng_seed: int,
    checkpoint_hook=None,
    train_init: InitMode = UniformRandom(),
):
    """Train a shared expert policy on the true scenario reward.

    Returns (policy, per-episode log). `checkpoint_hook(episode, policy)` is
    called every 10% of training and once at the end. If an update diverges
    the loop stops early and returns the last good parameters (the failed
    update is rolled back internally).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    init_rng = named_rng(rng_seed, "policy-init")
    env_rng = named_rng(rng_seed, "env")
    policy_rng = named_rng(rng_seed, "policy")
    policy = make_shared_policy(config.obs_dim, ppo, init_rng)
    opt = PpoOptimizer.for_policy(policy, ppo)
    buffer = RolloutBuffer()
    select = policy_select(policy, SAMPLE)
    checkpoint_every = max(1, episodes // 10)
    log = []
    for episode in range(1, episodes + 1):
        traj = play_episode(select, config, train_init, env_rng, policy_rng, buffer)
        mean_reward = float(traj.total_reward().mean()) / config.episode_length
        try:
            stats = ppo_update(policy, buffer, ppo, opt)
        except DivergenceError:
            log.append({"episode": episode, "mean_reward": mean_reward, "diverged": 1})
            break
        log.append(
            {
                "episode": episode,
                "mean_reward": mean_reward,
                "entropy": stats["entropy"],
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
            }
        )
        if checkpoint_hook and (episode % checkpoint_every == 0 or episode == episodes):
            checkpoint_hook(episode, policy)
    return policy, log


def generate_demos(
    policy: SharedPolicy,
    config: ScenarioConfig,
    count: int,
    epsilon: float,
    init: InitMode = UniformRandom(),
    rng_seed: int = 0,
    source: str = "",
) -> DemoPool:
    """Roll `count` expert episodes with per-step action noise `epsilon`.

    Each trajectory draws its env/policy/noise streams from its own index,
    so pools are reproducible and order-independent.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    base = policy_select(policy, SAMPLE)
    trajectories = []
    for i in range(count):
        noisy = epsilon_noisy(base, epsilon, named_rng(rng_seed, f"demo-noise-{i}"))
        trajectories.append(
            play_episode(
                noisy,
                config,
                init,
                named_rng(rng_seed, f"demo-env-{i}"),
                named_rng(rng_seed, f"demo-policy-{i}"),
                seed=i,
            )
        )
    return DemoPool(
        trajectories=trajectories, epsilon=epsilon, source=source, config=config
    )


def _manifest_path(path: Path) -> Path:
    return Path(str(path) + ".manifest.json")


def save_pool(pool: DemoPool, path: str | Path) -> None:
    """One JSON line per trajectory plus a sidecar manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for traj in pool.trajectories:
            fh.write(json.dumps(trajectory_to_record(traj)) + "\n")
    write_json(
        _manifest_path(path),
        {
            "version": POOL_FORMAT_VERSION,
            "pool_size": len(pool),
            "epsilon": pool.epsilon,
            "source": pool.source,
            "source_checkpoint_sha256": sha256_file(pool.source),
            "config": pool.config.to_dict(),
        },
    )


def load_pool(path: str | Path, validate: bool = True) -> DemoPool:
    """Read a pool and (by default) re-simulate every trajectory to verify
    the recorded states, observations, and rewards chain exactly."""
    path = Path(path)
    manifest_file = _manifest_path(path)
    if not manifest_file.exists():
        raise FileNotFoundError(f"pool manifest not found: {manifest_file}")
    with open(manifest_file) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != POOL_FORMAT_VERSION:
        raise ValueError(
            f"pool format version {manifest.get('version')!r} unsupported"
        )
    config = ScenarioConfig.from_dict(manifest["config"])
    trajectories = []
    with open(path) as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryError(f"{path}:{line_no + 1}: corrupt record: {exc}") from exc
            traj = trajectory_from_record(record, config)
            if validate:
                try:
                    replay_check(traj, config)
                except TrajectoryError as exc:
                    raise TrajectoryError(f"{path}:{line_no + 1}: {exc}") from exc
            trajectories.append(traj)
    if len(trajectories) != manifest["pool_size"]:
        raise TrajectoryError(
            f"pool holds {len(trajectories)} trajectories, manifest says "
            f"{manifest['pool_size']}"
        )
    return DemoPool(
        trajectories=trajectories,
        epsilon=manifest["epsilon"],
        source=manifest.get("source", ""),
        config=config,
    )
