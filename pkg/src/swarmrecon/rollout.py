"""Episode rollouts shared by training, demo generation, and evaluation.

An action selector is a callable (obs_matrix, rng) -> (actions, log_probs,
values) where the last two may be None for actors that do not expose them
(scripted or noisy experts). Episodes are recorded as Trajectory objects;
an optional RolloutBuffer is filled in passing for on-policy training.
"""

from __future__ import annotations

import numpy as np

from .gridworld import (
    GridState,
    InitMode,
    N_ACTIONS,
    ScenarioConfig,
    observe_all,
    reset,
    step,
)
from .ppo import RolloutBuffer, SharedPolicy, act_batch
from .trajectory import StepRecord, Trajectory


def policy_select(policy: SharedPolicy, mode: str):
    def select(obs: np.ndarray, rng):
        return act_batch(policy, obs, mode, rng)

    return select


def random_select(select_rng: np.random.Generator | None = None):
    """Uniform-random joint actions (the epsilon=1 'random' anchor)."""

    def select(obs: np.ndarray, rng):
        r = rng if rng is not None else select_rng
        return r.integers(0, N_ACTIONS, size=len(obs)), None, None

    return select


def epsilon_noisy(select, epsilon: float, noise_rng: np.random.Generator):
    """Per agent per step, replace the chosen action with a uniform one with
    probability epsilon. Noise draws come from their own stream so epsilon=0
    reproduces the underlying actor's rollout bit-exactly."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")

    def noisy(obs: np.ndarray, rng):
        actions, _, _ = select(obs, rng)
        n = len(obs)
        flips = noise_rng.random(n) < epsilon
        randoms = noise_rng.integers(0, N_ACTIONS, size=n)
        return np.where(flips, randoms, actions), None, None

    return noisy


def play_episode(
    select,
    config: ScenarioConfig,
    init: InitMode,
    env_rng: int | np.random.Generator,
    policy_rng: np.random.Generator | None = None,
    buffer: RolloutBuffer | None = None,
    seed: int | None = None,
) -> Trajectory:
    """Roll one full episode and return its trajectory.

    If `buffer` is given and the selector exposes log-probs and values, every
    step is also appended to it (true environment rewards; callers may
    overwrite them afterwards via buffer.set_rewards).
    """
    state = reset(config, init, env_rng)
    records = []
    initial = state
    for _ in range(config.episode_length):
        obs = observe_all(state, config)
        actions, log_probs, values = select(obs, policy_rng)
        result = step(state, actions, config)
        records.append(
            StepRecord(
                state=result.next_state,
                observations=obs,
                actions=np.asarray(actions, dtype=np.int64),
                rewards=result.rewards,
            )
        )
        if buffer is not None:
            if log_probs is None or values is None:
                raise ValueError("buffer fill requires log-probs and values")
            buffer.add_step(obs, actions, log_probs, result.rewards, values, result.done)
        state = result.next_state
    return Trajectory(
        scenario=config.kind.value, initial_state=initial, steps=records, seed=seed
    )
