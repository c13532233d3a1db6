"""Interaction features extracted from global states.

Each agent's feature vector is the negated euclidean distance to every other
entity: teammates first (sorted nearest-first, which makes homogeneous
agents' features comparable), then the fixed entities in config order.
Features are computed from the global state, independent of perception
range, since demonstrations record absolute positions of all entities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridworld import GridState, N_ACTIONS, ScenarioConfig
from .trajectory import Trajectory

EXPERT = "expert"
LEARNER = "learner"


@dataclass
class FeatureDataset:
    """Row-per-(state, agent) feature matrix with provenance columns."""

    features: np.ndarray       # (rows, dim) float64
    tags: np.ndarray           # (rows,) str, expert|learner
    agent_indices: np.ndarray  # (rows,) int

    def __post_init__(self):
        if not (len(self.features) == len(self.tags) == len(self.agent_indices)):
            raise ValueError("feature rows, tags, and agent indices must align")

    def __len__(self) -> int:
        return len(self.features)


def positions_array(states: "list[GridState]") -> np.ndarray:
    """(T, n_agents, 2) float64 agent positions for a list of states."""
    return np.array([s.agent_positions for s in states], dtype=np.float64)


def transform_positions(
    agent_positions: np.ndarray, config: ScenarioConfig
) -> np.ndarray:
    """Vectorized feature transform over a (T, n_agents, 2) position array.

    Returns (T, n_agents, feature_dim). Distances are sqrt of exact integer
    sums, so results are bit-identical to the scalar path.
    """
    pos = np.asarray(agent_positions, dtype=np.float64)
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    d_agents = np.sqrt((diff * diff).sum(axis=-1))  # (T, n, n)
    n = pos.shape[1]
    off_diag = ~np.eye(n, dtype=bool)
    teammates = d_agents[:, off_diag].reshape(pos.shape[0], n, n - 1)
    teammates = -np.sort(teammates, axis=-1)  # nearest teammate first
    entities = np.array(config.fixed_entities, dtype=np.float64)
    if len(entities):
        ediff = pos[:, :, None, :] - entities[None, None, :, :]
        fixed = -np.sqrt((ediff * ediff).sum(axis=-1))
        return np.concatenate([teammates, fixed], axis=-1)
    return teammates


def transform(
    state: GridState, agent_index: int, config: ScenarioConfig
) -> np.ndarray:
    """Feature vector of one agent in one state; every component is <= 0."""
    if not 0 <= agent_index < config.n_agents:
        raise ValueError(f"agent_index {agent_index} out of range")
    pos = positions_array([state])
    return transform_positions(pos, config)[0, agent_index]


def transform_trajectories(
    trajectories: "list[Trajectory]",
    config: ScenarioConfig,
    tag: str,
    include_actions: bool = False,
) -> FeatureDataset:
    """Flatten trajectories into one feature row per (step state, agent).

    With `include_actions` each row gets the acting agent's one-hot action
    appended (ablation switch; discriminators are state-only by default).
    """
    if not trajectories:
        raise ValueError("no trajectories to transform")
    if tag not in (EXPERT, LEARNER):
        raise ValueError(f"tag must be {EXPERT!r} or {LEARNER!r}, got {tag!r}")
    blocks = []
    agent_ids = []
    n = config.n_agents
    for traj in trajectories:
        if traj.scenario != config.kind.value:
            raise ValueError(
                f"trajectory scenario {traj.scenario!r} does not match config"
            )
        pos = positions_array(traj.states())
        feats = transform_positions(pos, config)  # (T, n, k)
        if include_actions:
            actions = np.array([rec.actions for rec in traj.steps])  # (T, n)
            onehot = np.zeros((*actions.shape, N_ACTIONS), dtype=np.float64)
            idx = np.indices(actions.shape)
            onehot[idx[0], idx[1], actions] = 1.0
            feats = np.concatenate([feats, onehot], axis=-1)
        blocks.append(feats.reshape(-1, feats.shape[-1]))
        agent_ids.append(np.tile(np.arange(n), len(traj.steps)))
    features = np.concatenate(blocks, axis=0)
    agent_indices = np.concatenate(agent_ids)
    return FeatureDataset(
        features=features,
        tags=np.full(len(features), tag),
        agent_indices=agent_indices,
    )


def concat_datasets(a: FeatureDataset, b: FeatureDataset) -> FeatureDataset:
    if a.features.shape[1] != b.features.shape[1]:
        raise ValueError("feature dimensions differ")
    return FeatureDataset(
        features=np.concatenate([a.features, b.features]),
        tags=np.concatenate([a.tags, b.tags]),
        agent_indices=np.concatenate([a.agent_indices, b.agent_indices]),
    )


def save_csv(dataset: FeatureDataset, path: str | Path) -> None:
    """Write rows as f0..fk, tag, agent for offline inspection."""
    dim = dataset.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dim)] + ["tag", "agent"])
        for row, tag, agent in zip(
            dataset.features, dataset.tags, dataset.agent_indices
        ):
            writer.writerow([repr(float(v)) for v in row] + [tag, int(agent)])
