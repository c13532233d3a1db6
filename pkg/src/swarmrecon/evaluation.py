"""Evaluation protocols: seen-start and random-start episode batches, reward
normalization against expert/random anchors, and cell-coverage traces.

Rewards reported here always come from the true scenario reward functions,
never from a discriminator. Each episode draws its own named random streams,
so reports are reproducible and independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import InitMode, ScenarioConfig, UniformRandom
from .rollout import play_episode
from .seeding import named_rng

SEEN = "seen"
RANDOM = "random"


def _summary(values: np.ndarray) -> dict:
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        "mean": float(np.mean(values)),
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


@dataclass
class EvalReport:
    """Per-episode true rewards for one actor under one init protocol.

    `episode_rewards[i]` is the episode total of the per-agent mean reward
    (comparable across shared- and individual-reward scenarios);
    `per_agent_rewards[i]` keeps the per-agent episode sums.
    """

    episode_rewards: np.ndarray
    per_agent_rewards: np.ndarray
    init_mode: str
    episodes: int
    expert_mean: float | None = None
    random_mean: float | None = None

    def summary(self) -> dict:
        out = _summary(self.episode_rewards)
        out["episodes"] = self.episodes
        out["init_mode"] = self.init_mode
        if self.expert_mean is not None:
            out["expert_mean"] = self.expert_mean
            out["random_mean"] = self.random_mean
        return out

    def to_rows(self) -> "list[dict]":
        rows = []
        for i, (total, per_agent) in enumerate(
            zip(self.episode_rewards, self.per_agent_rewards)
        ):
            row = {"episode": i, "reward": float(total)}
            row.update(
                {f"agent_{a}": float(v) for a, v in enumerate(per_agent)}
            )
            rows.append(row)
        return rows


def evaluate(
    select,
    config: ScenarioConfig,
    episodes: int,
    init: InitMode,
    rng_seed: int,
    init_label: str = RANDOM,
) -> EvalReport:
    """Roll `episodes` independent episodes and collect true-reward totals."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    totals = np.zeros(episodes)
    per_agent = np.zeros((episodes, config.n_agents))
    for i in range(episodes):
        traj = play_episode(
            select,
            config,
            init,
            named_rng(rng_seed, f"eval-env-{i}"),
            named_rng(rng_seed, f"eval-policy-{i}"),
        )
        agent_sums = traj.total_reward()
        per_agent[i] = agent_sums
        totals[i] = agent_sums.mean()
    return EvalReport(
        episode_rewards=totals,
        per_agent_rewards=per_agent,
        init_mode=init_label,
        episodes=episodes,
    )


def normalize(report: EvalReport, expert_mean: float, random_mean: float) -> EvalReport:
    """Affine map sending the random anchor to 0 and the expert anchor to 1."""
    if expert_mean == random_mean:
        raise ValueError("normalization anchors must differ")
    span = expert_mean - random_mean
    return EvalReport(
        episode_rewards=(report.episode_rewards - random_mean) / span,
        per_agent_rewards=(report.per_agent_rewards - random_mean) / span,
        init_mode=report.init_mode,
        episodes=report.episodes,
        expert_mean=expert_mean,
        random_mean=random_mean,
    )


@dataclass
class CoverageTrace:
    """Cells visited per episode per agent (post-step, episode_length each)
    plus the aggregate visit-count grid."""

    visits: list  # [episode][agent] -> list of (x, y), length episode_length
    grid_counts: np.ndarray
    episodes: int
    init_mode: str = RANDOM

    def distinct_cells(self) -> int:
        cells = {
            cell
            for episode in self.visits
            for agent_cells in episode
            for cell in agent_cells
        }
        return len(cells)

    def to_rows(self) -> "list[dict]":
        rows = []
        for e, episode in enumerate(self.visits):
            for a, agent_cells in enumerate(episode):
                for t, (x, y) in enumerate(agent_cells):
                    rows.append(
                        {"episode": e, "agent": a, "step": t + 1, "x": x, "y": y}
                    )
        return rows

    def grid_rows(self) -> "list[dict]":
        return [
            {"x": x, "y": y, "count": int(self.grid_counts[x, y])}
            for x in range(self.grid_counts.shape[0])
            for y in range(self.grid_counts.shape[1])
        ]


def coverage(
    select,
    config: ScenarioConfig,
    episodes: int = 10,
    init: InitMode | None = None,
    rng_seed: int = 0,
    init_label: str = RANDOM,
) -> CoverageTrace:
    """Record every post-step cell over `episodes` rollouts."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if init is None:
        init = UniformRandom()
    grid = np.zeros((config.grid_size, config.grid_size), dtype=np.int64)
    visits = []
    for i in range(episodes):
        traj = play_episode(
            select,
            config,
            init,
            named_rng(rng_seed, f"coverage-env-{i}"),
            named_rng(rng_seed, f"coverage-policy-{i}"),
        )
        per_agent = [[] for _ in range(config.n_agents)]
        for rec in traj.steps:
            for a, pos in enumerate(rec.state.agent_positions):
                per_agent[a].append(pos)
                grid[pos] += 1
        visits.append(per_agent)
    return CoverageTrace(
        visits=visits, grid_counts=grid, episodes=episodes, init_mode=init_label
    )
