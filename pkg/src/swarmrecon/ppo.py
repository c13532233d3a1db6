"""Parameter-shared multi-agent PPO.

All homogeneous agents act through one actor-critic pair; rollout data from
every agent is pooled into a single clipped-surrogate update at the end of
each episode. Gradients are exact (see mlp.backward): the clipped surrogate,
entropy bonus, and value loss are differentiated analytically through the
softmax/linear heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import (
    AdamState,
    DivergenceError,
    MlpParams,
    adam_step,
    backward,
    clip_grad_norm,
    forward,
    init_mlp,
)
from .gridworld import N_ACTIONS

SAMPLE = "sample"
GREEDY = "greedy"

_LOG_EPS = 1e-12


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 15
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    actor_lr: float = 5e-4
    critic_lr: float = 5e-4
    max_grad_norm: float = 10.0
    hidden_sizes: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.clip <= 0:
            raise ValueError("clip must be positive")


@dataclass
class SharedPolicy:
    """One actor (softmax over the 5 actions) and one critic for all agents."""

    actor: MlpParams
    critic: MlpParams

    def copy(self) -> "SharedPolicy":
        return SharedPolicy(self.actor.copy(), self.critic.copy())


def make_shared_policy(
    obs_dim: int, config: PpoConfig, rng: np.random.Generator
) -> SharedPolicy:
    actor = init_mlp([obs_dim, *config.hidden_sizes, N_ACTIONS], "softmax", rng)
    critic = init_mlp([obs_dim, *config.hidden_sizes, 1], "linear", rng)
    return SharedPolicy(actor, critic)


@dataclass
class PpoOptimizer:
    actor: AdamState
    critic: AdamState

    @classmethod
    def for_policy(cls, policy: SharedPolicy, config: PpoConfig) -> "PpoOptimizer":
        return cls(
            actor=AdamState.for_params(policy.actor, config.actor_lr),
            critic=AdamState.for_params(policy.critic, config.critic_lr),
        )


def act_batch(
    policy: SharedPolicy,
    obs: np.ndarray,
    mode: str,
    rng: np.random.Generator | None = None,
):
    """Select actions for a stack of observations, one row per agent.

    Returns (actions, log_probs, values) as 1-D arrays. Greedy mode breaks
    ties toward the lowest action index.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    probs = forward(policy.actor, obs)
    if mode == GREEDY:
        actions = np.argmax(probs, axis=-1)
    elif mode == SAMPLE:
        if rng is None:
            raise ValueError("sampling requires an rng")
        cdf = np.cumsum(probs, axis=-1)
        draws = rng.random(len(obs)) * cdf[:, -1]
        actions = (draws[:, None] >= cdf).sum(axis=-1)
    else:
        raise ValueError(f"mode must be {SAMPLE!r} or {GREEDY!r}, got {mode!r}")
    log_probs = np.log(
        np.maximum(probs[np.arange(len(obs)), actions], _LOG_EPS)
    )
    values = forward(policy.critic, obs)[:, 0]
    return actions.astype(np.int64), log_probs, values


def act(
    policy: SharedPolicy,
    obs: np.ndarray,
    mode: str = SAMPLE,
    rng: np.random.Generator | None = None,
):
    """Single-observation version of act_batch -> (action, log_prob, value)."""
    actions, log_probs, values = act_batch(policy, np.asarray(obs)[None, :], mode, rng)
    return int(actions[0]), float(log_probs[0]), float(values[0])


@dataclass
class RolloutBuffer:
    """Per-episode storage; every field is a list of per-step (n_agents, ...) arrays."""

    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add_step(self, obs, actions, log_probs, rewards, values, done: bool):
        self.observations.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.log_probs.append(np.asarray(log_probs, dtype=np.float64))
        self.rewards.append(np.asarray(rewards, dtype=np.float64))
        self.values.append(np.asarray(values, dtype=np.float64))
        self.dones.append(bool(done))

    def __len__(self) -> int:
        return len(self.observations)

    def set_rewards(self, rewards: np.ndarray) -> None:
        """Replace the stored rewards (used when rewards arrive post-hoc,
        e.g. from a discriminator at episode end)."""
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.shape != (len(self), len(self.actions[0])):
            raise ValueError(f"reward shape {rewards.shape} does not match buffer")
        self.rewards = [row for row in rewards]

    def clear(self) -> None:
        for name in ("observations", "actions", "log_probs", "rewards", "values", "dones"):
            getattr(self, name).clear()


def compute_gae(buffer: RolloutBuffer, config: PpoConfig):
    """Generalized advantage estimates and return targets, shape (T, n_agents).

    Raw (unnormalized) values; ppo_update normalizes per batch.
    """
    if len(buffer) == 0:
        raise ValueError("empty rollout buffer")
    rewards = np.stack(buffer.rewards)
    values = np.stack(buffer.values)
    not_done = 1.0 - np.array(buffer.dones, dtype=np.float64)[:, None]
    T = len(buffer)
    advantages = np.zeros_like(rewards)
    next_adv = 0.0
    next_value = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + config.gamma * next_value * not_done[t] - values[t]
        next_adv = delta + config.gamma * config.gae_lambda * not_done[t] * next_adv
        advantages[t] = next_adv
        next_value = values[t]
    return advantages, advantages + values


def ppo_update(
    policy: SharedPolicy,
    buffer: RolloutBuffer,
    config: PpoConfig,
    opt: PpoOptimizer,
) -> dict:
    """Clipped-surrogate update over the pooled per-agent data.

    Runs `config.epochs` full-batch passes, then clears the buffer. On any
    non-finite loss the pre-update parameters are restored and
    DivergenceError is raised.
    """
    advantages, returns = compute_gae(buffer, config)
    obs = np.concatenate([o for o in buffer.observations])         # (T*n, d)
    actions = np.concatenate(buffer.actions)
    logp_old = np.concatenate(buffer.log_probs)
    adv = advantages.reshape(-1)
    ret = returns.reshape(-1)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n = len(obs)
    rows = np.arange(n)
    p_old = np.exp(logp_old)
    snapshot = policy.copy()
    stats = {}
    try:
        for _ in range(config.epochs):
            probs = forward(policy.actor, obs)
            p_act = np.maximum(probs[rows, actions], _LOG_EPS)
            ratio = p_act / p_old
            clipped = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip)
            surrogate = np.minimum(ratio * adv, clipped * adv)
            logp = np.log(np.maximum(probs, _LOG_EPS))
            entropy = -(probs * logp).sum(axis=-1)
            policy_loss = -surrogate.mean()
            entropy_mean = entropy.mean()
            loss = policy_loss - config.entropy_coef * entropy_mean
            if not np.isfinite(loss):
                raise DivergenceError("non-finite actor loss")

            # exact subgradient of min(ratio*A, clip(ratio)*A) w.r.t. the
            # taken action's probability; zero on the clipping plateau
            active = np.where(
                adv >= 0, ratio <= 1.0 + config.clip, ratio >= 1.0 - config.clip
            )
            dprobs = config.entropy_coef * (logp + 1.0) / n
            dprobs[rows, actions] -= np.where(active, adv / p_old, 0.0) / n
            grads = backward(policy.actor, obs, dprobs)
            actor_norm = clip_grad_norm(grads, config.max_grad_norm)
            adam_step(policy.actor, grads, opt.actor)

            v = forward(policy.critic, obs)[:, 0]
            value_loss = config.value_coef * np.mean((ret - v) ** 2)
            if not np.isfinite(value_loss):
                raise DivergenceError("non-finite value loss")
            dv = (config.value_coef * 2.0 * (v - ret) / n)[:, None]
            vgrads = backward(policy.critic, obs, dv)
            critic_norm = clip_grad_norm(vgrads, config.max_grad_norm)
            adam_step(policy.critic, vgrads, opt.critic)

            stats = {
                "policy_loss": float(policy_loss),
                "value_loss": float(value_loss),
                "entropy": float(entropy_mean),
                "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip)),
                "approx_kl": float(np.mean(logp_old - np.log(p_act))),
                "actor_grad_norm": float(actor_norm),
                "critic_grad_norm": float(critic_norm),
            }
    except DivergenceError:
        policy.actor = snapshot.actor
        policy.critic = snapshot.critic
        raise
    finally:
        buffer.clear()
    return stats
