"""Comparison learners: behavior cloning and a parameter-shared adversarial
IRL reconstruction.

BC learns a direct observation-to-action map per agent from the raw
demonstrations (no feature transform), one independent network per agent.
The AIRL-style baseline keeps the adversarial loop and cadence of the main
method but uses a single shared structured discriminator over
(feature, action) pairs pooled across agents: D = exp(g) / (exp(g) + pi),
so its learner reward is the algebraic identity log D - log(1 - D)
= g - log pi.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .demos import DemoPool
from .features import EXPERT, LEARNER, transform_trajectories
from .gridworld import InitMode, N_ACTIONS, ScenarioConfig, UniformRandom
from .magail import (
    GailSchedule,
    _check_compatible,
    is_discriminator_update_episode,
)
from .mlp import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_mlp,
)
from .ppo import (
    GREEDY,
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

BC_HIDDEN = (128, 128, 128)
AIRL_REWARD_HIDDEN = (128, 128)
AIRL_REWARD_LR = 1e-5

_LOG_EPS = 1e-12


# --- behavior cloning -------------------------------------------------------


@dataclass
class BcModel:
    """Independent per-agent action classifiers."""

    networks: list[MlpParams]

    @property
    def n_agents(self) -> int:
        return len(self.networks)


def _bc_dataset(demos: DemoPool, agent: int):
    obs = np.concatenate(
        [np.stack([rec.observations[agent] for rec in t.steps]) for t in demos.trajectories]
    )
    actions = np.concatenate(
        [np.array([rec.actions[agent] for rec in t.steps]) for t in demos.trajectories]
    )
    return obs, actions.astype(np.int64)


def _cross_entropy(net: MlpParams, obs: np.ndarray, actions: np.ndarray) -> float:
    probs = forward(net, obs)
    p = np.maximum(probs[np.arange(len(obs)), actions], _LOG_EPS)
    return float(-np.mean(np.log(p)))


def train_bc(
    demos: DemoPool,
    config: ScenarioConfig,
    epochs: int = 200,
    learning_rate: float = 3e-4,
    rng_seed: int = 0,
    batch_size: int = 256,
):
    """Fit one classifier per agent on its own (observation, action) pairs.

    Uses a seeded 90/10 train/validation split and returns each agent's
    parameters at the best validation loss, plus per-epoch log rows.
    """
    if not demos.trajectories:
        raise ValueError("demo pool is empty")
    _check_compatible(config, demos)
    init_rng = named_rng(rng_seed, "bc-init")
    networks = []
    log = []
    for agent in range(config.n_agents):
        obs, actions = _bc_dataset(demos, agent)
        split_rng = named_rng(rng_seed, f"bc-split-{agent}")
        order = split_rng.permutation(len(obs))
        n_val = max(1, len(obs) // 10)
        val_idx, train_idx = order[:n_val], order[n_val:]
        x_train, y_train = obs[train_idx], actions[train_idx]
        x_val, y_val = obs[val_idx], actions[val_idx]

        net = init_mlp([config.obs_dim, *BC_HIDDEN, N_ACTIONS], "softmax", init_rng)
        opt = AdamState.for_params(net, learning_rate)
        batch_rng = named_rng(rng_seed, f"bc-batches-{agent}")
        best_val = _cross_entropy(net, x_val, y_val)
        best_params = net.copy()
        for epoch in range(1, epochs + 1):
            order = batch_rng.permutation(len(x_train))
            for b in range(0, len(order), batch_size):
                idx = order[b : b + batch_size]
                x, y = x_train[idx], y_train[idx]
                probs = forward(net, x)
                rows = np.arange(len(x))
                dout = np.zeros_like(probs)
                dout[rows, y] = -1.0 / (
                    len(x) * np.maximum(probs[rows, y], _LOG_EPS)
                )
                adam_step(net, backward(net, x, dout), opt)
            train_loss = _cross_entropy(net, x_train, y_train)
            val_loss = _cross_entropy(net, x_val, y_val)
            if val_loss < best_val:
                best_val = val_loss
                best_params = net.copy()
            log.append(
                {
                    "agent": agent,
                    "epoch": epoch,
                    "train_loss": train_loss,
                    "val_loss": val_loss,
                }
            )
        networks.append(best_params)
    return BcModel(networks), log


def act_bc(
    model: BcModel,
    agent_index: int,
    obs: np.ndarray,
    mode: str = SAMPLE,
    rng: np.random.Generator | None = None,
) -> int:
    if not 0 <= agent_index < model.n_agents:
        raise ValueError(f"agent_index {agent_index} out of range")
    probs = forward(model.networks[agent_index], np.asarray(obs, dtype=np.float64))
    if mode == GREEDY:
        return int(np.argmax(probs))
    if mode != SAMPLE:
        raise ValueError(f"mode must be {SAMPLE!r} or {GREEDY!r}")
    if rng is None:
        raise ValueError("sampling requires an rng")
    return int((rng.random() * probs.sum() >= np.cumsum(probs)).sum())


def bc_select(model: BcModel, mode: str = SAMPLE):
    """Rollout selector over the per-agent networks (no log-probs/values)."""

    def select(obs: np.ndarray, rng):
        return (
            np.array([act_bc(model, i, row, mode, rng) for i, row in enumerate(obs)]),
            None,
            None,
        )

    return select


# --- adversarial IRL baseline ------------------------------------------------


@dataclass
class AirlModel:
    policy: SharedPolicy
    reward_net: MlpParams  # scalar g over (feature, one-hot action)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def airl_disc_output(g_value: np.ndarray, log_pi: np.ndarray) -> np.ndarray:
    """D = exp(g) / (exp(g) + pi), computed stably as sigmoid(g - log pi)."""
    return _sigmoid(np.asarray(g_value) - np.asarray(log_pi))


def airl_reward(g_value: np.ndarray, log_pi: np.ndarray) -> np.ndarray:
    """log D - log(1 - D), which collapses algebraically to g - log pi."""
    return np.asarray(g_value) - np.asarray(log_pi)


def _policy_log_probs(policy: SharedPolicy, obs: np.ndarray, actions: np.ndarray):
    probs = forward(policy.actor, obs)
    return np.log(np.maximum(probs[np.arange(len(obs)), actions], _LOG_EPS))


def _onehot(actions: np.ndarray) -> np.ndarray:
    out = np.zeros((len(actions), N_ACTIONS), dtype=np.float64)
    out[np.arange(len(actions)), actions] = 1.0
    return out


def train_airl(
    demos: DemoPool,
    config: ScenarioConfig,
    schedule: GailSchedule,
    ppo: PpoConfig,
    rng_seed: int,
    train_init: InitMode = UniformRandom(),
):
    """Adversarial loop with the same cadence as the main method but a single
    shared reward network and a structured discriminator.

    The discriminator is trained toward 1 on expert (feature, action) rows
    and 0 on learner rows, so g rises on expert-dense features and
    g - log pi is an imitation reward. Returns (AirlModel, log rows).
    """
    if not demos.trajectories:
        raise ValueError("demo pool is empty")
    _check_compatible(config, demos)

    expert = transform_trajectories(demos.trajectories, config, EXPERT, include_actions=True)
    expert_x = expert.features
    expert_obs = np.concatenate(
        [
            np.stack([rec.observations for rec in t.steps]).reshape(-1, config.obs_dim)
            for t in demos.trajectories
        ]
    )
    expert_actions = np.concatenate(
        [np.stack([rec.actions for rec in t.steps]).reshape(-1) for t in demos.trajectories]
    ).astype(np.int64)

    init_rng = named_rng(rng_seed, "policy-init")
    g_init_rng = named_rng(rng_seed, "reward-net-init")
    env_rng = named_rng(rng_seed, "env")
    policy_rng = named_rng(rng_seed, "policy")
    disc_rng = named_rng(rng_seed, "disc-train")

    policy = make_shared_policy(config.obs_dim, ppo, init_rng)
    opt = PpoOptimizer.for_policy(policy, ppo)
    g_net = init_mlp(
        [config.feature_dim + N_ACTIONS, *AIRL_REWARD_HIDDEN, 1], "linear", g_init_rng
    )
    g_opt = AdamState.for_params(g_net, AIRL_REWARD_LR)
    buffer = RolloutBuffer()
    select = policy_select(policy, SAMPLE)
    history: deque = deque(maxlen=schedule.learner_buffer_episodes)

    log = []
    started = time.time()
    for episode in range(1, schedule.total_episodes + 1):
        traj = play_episode(select, config, train_init, env_rng, policy_rng, buffer)
        true_reward = float(traj.total_reward().mean()) / config.episode_length
        ep_feats = transform_trajectories([traj], config, LEARNER, include_actions=True).features
        ep_obs = np.stack([rec.observations for rec in traj.steps]).reshape(-1, config.obs_dim)
        ep_actions = np.stack([rec.actions for rec in traj.steps]).reshape(-1).astype(np.int64)
        ep_logp = np.stack(buffer.log_probs).reshape(-1)
        history.append((ep_feats, ep_obs, ep_actions))

        g_vals = forward(g_net, ep_feats)[:, 0]
        rewards = airl_reward(g_vals, ep_logp).reshape(len(traj.steps), config.n_agents)
        buffer.set_rewards(rewards)
        stats = ppo_update(policy, buffer, ppo, opt)

        row = {
            "episode": episode,
            "disc_reward_mean": float(rewards.mean()),
            "true_reward_mean": true_reward,
            "entropy": stats["entropy"],
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
        }
        if is_discriminator_update_episode(episode, schedule):
            learner_x = np.concatenate([h[0] for h in history])
            learner_obs = np.concatenate([h[1] for h in history])
            learner_actions = np.concatenate([h[2] for h in history])
            disc_stats = _train_airl_discriminator(
                g_net,
                g_opt,
                policy,
                (expert_x, expert_obs, expert_actions),
                (learner_x, learner_obs, learner_actions),
                schedule,
                disc_rng,
            )
            row.update(disc_stats)
        row["wall_clock"] = time.time() - started
        log.append(row)
    return AirlModel(policy=policy, reward_net=g_net), log


def _train_airl_discriminator(
    g_net: MlpParams,
    g_opt: AdamState,
    policy: SharedPolicy,
    expert_data,
    learner_data,
    schedule: GailSchedule,
    rng: np.random.Generator,
) -> dict:
    expert_x, expert_obs, expert_actions = expert_data
    learner_x, learner_obs, learner_actions = learner_data
    half = max(1, schedule.disc_batch_size // 2)
    batches_per_epoch = max(1, int(np.ceil(len(learner_x) / half)))
    last_loss = np.nan
    for _ in range(schedule.disc_epochs_per_update):
        order = rng.permutation(len(learner_x))
        for b in range(batches_per_epoch):
            l_idx = order[b * half : (b + 1) * half]
            if len(l_idx) == 0:
                continue
            e_idx = rng.integers(0, len(expert_x), size=half)
            x = np.concatenate([expert_x[e_idx], learner_x[l_idx]])
            obs = np.concatenate([expert_obs[e_idx], learner_obs[l_idx]])
            actions = np.concatenate([expert_actions[e_idx], learner_actions[l_idx]])
            log_pi = _policy_log_probs(policy, obs, actions)
            z = forward(g_net, x)[:, 0] - log_pi
            p = _sigmoid(z)
            n_e = len(e_idx)
            # -(mean log D(expert) + mean log(1 - D(learner))), stable softplus form
            last_loss = float(
                np.mean(np.logaddexp(0.0, -z[:n_e]))
                + np.mean(np.logaddexp(0.0, z[n_e:]))
            )
            dz = np.empty_like(z)
            dz[:n_e] = (p[:n_e] - 1.0) / n_e
            dz[n_e:] = p[n_e:] / (len(z) - n_e)
            adam_step(g_net, backward(g_net, x, dz[:, None]), g_opt)
    e_idx = rng.integers(0, len(expert_x), size=min(1024, len(expert_x)))
    l_idx = rng.integers(0, len(learner_x), size=min(1024, len(learner_x)))
    z_e = forward(g_net, expert_x[e_idx])[:, 0] - _policy_log_probs(
        policy, expert_obs[e_idx], expert_actions[e_idx]
    )
    z_l = forward(g_net, learner_x[l_idx])[:, 0] - _policy_log_probs(
        policy, learner_obs[l_idx], learner_actions[l_idx]
    )
    return {
        "disc_loss": last_loss,
        "disc_accuracy": 0.5 * (float(np.mean(z_e > 0)) + float(np.mean(z_l < 0))),
    }
