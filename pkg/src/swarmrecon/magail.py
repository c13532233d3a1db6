"""Adversarial behavior reconstruction with one discriminator per agent.

Each agent n has its own binary classifier D_n over interaction features,
but all discriminators share the same pooled expert feature set (expert
demonstration sharing), so any valid expert behavior is rewarded no matter
which expert produced it. The shared generator policy is improved with
parameter-shared PPO on the discriminator-derived reward.

Class convention: discriminators are pushed toward 1 on learner features
and toward 0 on expert features. The default per-step reward,
log D(f) + log(1 - D(f)), peaks where the discriminator is maximally
unsure (D = 0.5); log D and -log(1 - D) are available for ablations.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .demos import DemoPool
from .features import EXPERT, positions_array, transform_positions, transform_trajectories
from .gridworld import InitMode, ScenarioConfig, UniformRandom
from .mlp import (
    AdamState,
    DivergenceError,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_mlp,
)
from .ppo import (
    PpoConfig,
    PpoOptimizer,
    RolloutBuffer,
    SAMPLE,
    SharedPolicy,
    make_shared_policy,
    ppo_update,
)
from .rollout import play_episode, policy_select
from .seeding import named_rng

DISC_LEARNING_RATE = 1e-5
DISC_HIDDEN = (128, 128)

# discriminator outputs are clamped into [CLAMP, 1 - CLAMP] before any log
CLAMP = 1e-7

REWARD_CONFUSION = "confusion"            # log D + log(1 - D), the default
REWARD_LOG_D = "log_d"                    # log D
REWARD_NEG_LOG_1MD = "neg_log_one_minus_d"  # -log(1 - D)
REWARD_MODES = (REWARD_CONFUSION, REWARD_LOG_D, REWARD_NEG_LOG_1MD)


@dataclass
class GailSchedule:
    """Episode budget and discriminator update cadence.

    Discriminators first train at `init_episode`, then every
    `early_interval` episodes until `early_until`, then every
    `late_interval` episodes. Learner features are retained for the most
    recent `learner_buffer_episodes` episodes.
    """

    init_episode: int = 50
    early_interval: int = 50
    early_until: int = 1000
    late_interval: int = 500
    total_episodes: int = 10_000
    disc_epochs_per_update: int = 5
    disc_batch_size: int = 256
    learner_buffer_episodes: int = 50

    def __post_init__(self):
        if not self.init_episode <= self.early_until <= self.total_episodes:
            raise ValueError(
                "schedule requires init_episode <= early_until <= total_episodes"
            )
        if self.early_interval <= 0 or self.late_interval <= 0:
            raise ValueError("update intervals must be positive")

    @classmethod
    def fit(cls, total_episodes: int, **overrides) -> "GailSchedule":
        """Default cadence clamped to a (possibly small) episode budget."""
        early_until = min(
            overrides.pop("early_until", cls.early_until), total_episodes
        )
        init_episode = min(
            overrides.pop("init_episode", cls.init_episode), early_until
        )
        return cls(
            init_episode=init_episode,
            early_until=early_until,
            total_episodes=total_episodes,
            **overrides,
        )


def is_discriminator_update_episode(episode: int, schedule: GailSchedule) -> bool:
    if episode < schedule.init_episode or episode > schedule.total_episodes:
        return False
    if episode <= schedule.early_until:
        return (episode - schedule.init_episode) % schedule.early_interval == 0
    return episode % schedule.late_interval == 0


def discriminator_update_episodes(schedule: GailSchedule) -> list[int]:
    return [
        ep
        for ep in range(1, schedule.total_episodes + 1)
        if is_discriminator_update_episode(ep, schedule)
    ]


@dataclass
class DiscriminatorBank:
    """One sigmoid-head MLP and optimizer per agent, all sharing an input dim."""

    discriminators: list[MlpParams]
    optimizers: list[AdamState]
    learning_rate: float = DISC_LEARNING_RATE
    initialized: bool = False  # flips after the first (large) training burst

    @classmethod
    def create(
        cls,
        n_agents: int,
        feature_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = DISC_HIDDEN,
        learning_rate: float = DISC_LEARNING_RATE,
    ) -> "DiscriminatorBank":
        discs = [
            init_mlp([feature_dim, *hidden, 1], "sigmoid", rng)
            for _ in range(n_agents)
        ]
        opts = [AdamState.for_params(d, learning_rate) for d in discs]
        return cls(discs, opts, learning_rate)

    def __len__(self) -> int:
        return len(self.discriminators)


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, CLAMP, 1.0 - CLAMP)


def discriminator_loss(
    disc_output_expert: np.ndarray, disc_output_learner: np.ndarray
) -> float:
    """Binary cross-entropy under the learner->1 / expert->0 convention."""
    d_e = _clamp(np.asarray(disc_output_expert, dtype=np.float64))
    d_l = _clamp(np.asarray(disc_output_learner, dtype=np.float64))
    return float(-(np.mean(np.log(d_l)) + np.mean(np.log(1.0 - d_e))))


def rewards_from_outputs(outputs: np.ndarray, mode: str) -> np.ndarray:
    d = _clamp(np.asarray(outputs, dtype=np.float64))
    if mode == REWARD_CONFUSION:
        return np.log(d) + np.log(1.0 - d)
    if mode == REWARD_LOG_D:
        return np.log(d)
    if mode == REWARD_NEG_LOG_1MD:
        return -np.log(1.0 - d)
    raise ValueError(f"unknown reward mode {mode!r}; expected one of {REWARD_MODES}")


def learner_reward(disc: MlpParams, feature: np.ndarray, mode: str = REWARD_CONFUSION) -> float:
    """Per-step reward for one agent from its own discriminator's output."""
    d = forward(disc, np.asarray(feature, dtype=np.float64))
    return float(rewards_from_outputs(d, mode)[0])


def disc_outputs(disc: MlpParams, features: np.ndarray) -> np.ndarray:
    """Discriminator outputs for a (rows, dim) feature batch, shape (rows,)."""
    return forward(disc, np.atleast_2d(features))[:, 0]


def _train_discriminator(
    disc: MlpParams,
    opt: AdamState,
    expert_features: np.ndarray,
    learner_features: np.ndarray,
    schedule: GailSchedule,
    rng: np.random.Generator,
    swap_classes: bool,
    full_pass: bool = False,
) -> dict:
    """Balanced-minibatch epochs over the learner set vs the pooled expert set.

    An epoch spans the learner buffer; the one-time initialization burst
    (`full_pass`) spans the larger of the two sets instead, so the classifier
    starts out properly separating before the slow tracking updates begin.
    """
    if swap_classes:
        expert_features, learner_features = learner_features, expert_features
    half = max(1, schedule.disc_batch_size // 2)
    cover = (
        max(len(learner_features), len(expert_features))
        if full_pass
        else len(learner_features)
    )
    batches_per_epoch = max(1, int(np.ceil(cover / half)))
    last_loss = np.nan
    for _ in range(schedule.disc_epochs_per_update):
        order = rng.permutation(len(learner_features))
        for b in range(batches_per_epoch):
            lo = b * half
            if lo < len(order):
                l_idx = order[lo : lo + half]
            else:  # full-pass burst: learner side resamples once exhausted
                l_idx = rng.integers(0, len(learner_features), size=half)
            e_idx = rng.integers(0, len(expert_features), size=half)
            l_batch = learner_features[l_idx]
            e_batch = expert_features[e_idx]
            x = np.concatenate([l_batch, e_batch])
            p = _clamp(forward(disc, x)[:, 0])
            n_l, n_e = len(l_batch), len(e_batch)
            last_loss = float(
                -(np.mean(np.log(p[:n_l])) + np.mean(np.log(1.0 - p[n_l:])))
            )
            dout = np.empty_like(p)
            dout[:n_l] = -1.0 / (n_l * p[:n_l])        # push learner outputs up
            dout[n_l:] = 1.0 / (n_e * (1.0 - p[n_l:]))  # push expert outputs down
            grads = backward(disc, x, dout[:, None])
            adam_step(disc, grads, opt)
    # balanced post-update accuracy on fresh samples
    l_idx = rng.integers(0, len(learner_features), size=min(1024, len(learner_features)))
    e_idx = rng.integers(0, len(expert_features), size=min(1024, len(expert_features)))
    acc_l = float(np.mean(disc_outputs(disc, learner_features[l_idx]) > 0.5))
    acc_e = float(np.mean(disc_outputs(disc, expert_features[e_idx]) < 0.5))
    return {"loss": last_loss, "accuracy": 0.5 * (acc_l + acc_e)}


def update_discriminator_bank(
    bank: DiscriminatorBank,
    expert_features: np.ndarray,
    learner_episode_features: "list[np.ndarray]",
    schedule: GailSchedule,
    rng: np.random.Generator,
    swap_classes: bool = False,
) -> "list[dict]":
    """Train every D_n: its own agent's recent learner features against the
    expert set shared by all discriminators. The very first call is the
    large initialization burst."""
    stats = []
    for n, (disc, opt) in enumerate(zip(bank.discriminators, bank.optimizers)):
        learner_rows = np.concatenate([ep[:, n, :] for ep in learner_episode_features])
        stats.append(
            _train_discriminator(
                disc,
                opt,
                expert_features,
                learner_rows,
                schedule,
                rng,
                swap_classes,
                full_pass=not bank.initialized,
            )
        )
    bank.initialized = True
    return stats


def _check_compatible(config: ScenarioConfig, pool: DemoPool) -> None:
    ours = config.to_dict()
    theirs = pool.config.to_dict()
    for key in ("kind", "grid_size", "n_agents", "fixed_entities", "episode_length"):
        if ours[key] != theirs[key]:
            raise ValueError(
                f"demo pool was recorded under a different scenario: "
                f"{key}={theirs[key]!r} vs {ours[key]!r}"
            )


def train_magail(
    config: ScenarioConfig,
    demos: DemoPool,
    schedule: GailSchedule,
    ppo: PpoConfig,
    rng_seed: int,
    reward_mode: str = REWARD_CONFUSION,
    swap_disc_classes: bool = False,
    train_init: InitMode = UniformRandom(),
):
    """Recover an imitating policy from demonstrations.

    Per episode: roll out the shared policy, score every (state, agent) pair
    with that agent's discriminator, and run one PPO update on the
    discriminator-derived rewards. Discriminators train on the cadence in
    `schedule`. The true environment reward is logged for monitoring only
    and never reaches the learner.

    Returns (policy, discriminator bank, per-episode log rows).
    """
    if not demos.trajectories:
        raise ValueError("demo pool is empty")
    if reward_mode not in REWARD_MODES:
        raise ValueError(f"unknown reward mode {reward_mode!r}")
    _check_compatible(config, demos)

    expert_features = transform_trajectories(
        demos.trajectories, config, EXPERT
    ).features
    init_rng = named_rng(rng_seed, "policy-init")
    disc_init_rng = named_rng(rng_seed, "disc-init")
    env_rng = named_rng(rng_seed, "env")
    policy_rng = named_rng(rng_seed, "policy")
    disc_rng = named_rng(rng_seed, "disc-train")

    policy = make_shared_policy(config.obs_dim, ppo, init_rng)
    opt = PpoOptimizer.for_policy(policy, ppo)
    bank = DiscriminatorBank.create(config.n_agents, config.feature_dim, disc_init_rng)
    buffer = RolloutBuffer()
    select = policy_select(policy, SAMPLE)
    learner_history: deque = deque(maxlen=schedule.learner_buffer_episodes)

    log = []
    started = time.time()
    for episode in range(1, schedule.total_episodes + 1):
        traj = play_episode(select, config, train_init, env_rng, policy_rng, buffer)
        true_reward = float(traj.total_reward().mean()) / config.episode_length
        feats = transform_positions(positions_array(traj.states()), config)
        learner_history.append(feats)

        outputs = np.stack(
            [
                disc_outputs(bank.discriminators[n], feats[:, n, :])
                for n in range(config.n_agents)
            ],
            axis=1,
        )  # (T, n_agents)
        disc_rewards = rewards_from_outputs(outputs, reward_mode)
        if not np.all(np.isfinite(disc_rewards)):
            raise DivergenceError("non-finite discriminator reward")
        buffer.set_rewards(disc_rewards)
        stats = ppo_update(policy, buffer, ppo, opt)

        row = {
            "episode": episode,
            "disc_reward_mean": float(disc_rewards.mean()),
            "true_reward_mean": true_reward,
            "disc_output_mean": float(outputs.mean()),
            "entropy": stats["entropy"],
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
        }
        if is_discriminator_update_episode(episode, schedule):
            disc_stats = update_discriminator_bank(
                bank,
                expert_features,
                list(learner_history),
                schedule,
                disc_rng,
                swap_disc_classes,
            )
            row["disc_loss"] = float(np.mean([s["loss"] for s in disc_stats]))
            row["disc_accuracy"] = float(np.mean([s["accuracy"] for s in disc_stats]))
        row["wall_clock"] = time.time() - started
        log.append(row)
    return policy, bank, log
