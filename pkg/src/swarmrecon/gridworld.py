"""Grid-world control layer for the three swarm scenarios.

A square grid is shared by a small homogeneous swarm and a handful of fixed
entities whose meaning depends on the scenario: active hover positions
(aggregation), home cells (homing), or inactive obstacles (obstacle
avoidance). Agents move one cell per step in five directions, observe nearby
entities as normalized displacements, and collect scenario-specific rewards.

Coordinates are (x, y) integer cells with x to the right and y "forward".
Moves that would leave the grid are clamped; agents never block each other
and may sit on fixed-entity cells (the reward, not the dynamics, penalizes
that). Episodes end purely by time limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .seeding import as_rng

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid scenario or run configuration."""


class ScenarioKind(Enum):
    AGGREGATION = "aggregation"
    HOMING = "homing"
    OBSTACLE_AVOIDANCE = "obstacle_avoidance"


class Action(IntEnum):
    STOP = 0
    RIGHT = 1
    LEFT = 2
    FORWARD = 3
    BACKWARD = 4


N_ACTIONS = 5

# (dx, dy) per action index.
_MOVES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))

# Sentinel pair for entities beyond perception range; outside the reachable
# normalized-displacement band (max |delta|/grid_size = 0.6 at range 6).
OUT_OF_RANGE = (0.7, 0.7)

_DEFAULT_ENTITIES = {
    ScenarioKind.AGGREGATION: ((2, 7), (7, 2)),
    ScenarioKind.HOMING: ((1, 1), (8, 1), (4, 8)),
    ScenarioKind.OBSTACLE_AVOIDANCE: ((3, 3), (6, 6), (3, 7)),
}


def default_fixed_entities(kind: ScenarioKind) -> tuple[tuple[int, int], ...]:
    return _DEFAULT_ENTITIES[kind]


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one scenario instance.

    `fixed_entities` defaults to per-kind landmark positions; any in-grid
    list may be supplied instead. `cohesion_includes_fixed` switches the
    aggregation cohesion count to also consider fixed entities as neighbors
    (off by default: only swarm agents count).
    """

    kind: ScenarioKind
    grid_size: int = 10
    n_agents: int = 3
    fixed_entities: tuple[tuple[int, int], ...] | None = None
    episode_length: int = 50
    perception_range: int = 6
    reward_c: float = 1.0
    aggregation_threshold: float = -1.5
    exploration_penalty: float = -0.05
    cohesion_includes_fixed: bool = False

    def __post_init__(self):
        if self.fixed_entities is None:
            object.__setattr__(
                self, "fixed_entities", default_fixed_entities(self.kind)
            )
        else:
            object.__setattr__(
                self,
                "fixed_entities",
                tuple((int(x), int(y)) for x, y in self.fixed_entities),
            )
        if self.grid_size < 2:
            raise ConfigError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.n_agents < 2:
            raise ConfigError(f"n_agents must be >= 2, got {self.n_agents}")
        if self.episode_length <= 0:
            raise ConfigError("episode_length must be positive")
        if self.perception_range < 0:
            raise ConfigError("perception_range must be non-negative")
        if self.reward_c <= 0:
            raise ConfigError("reward_c must be positive")
        if self.exploration_penalty > 0:
            raise ConfigError("exploration_penalty must be non-positive")
        if self.kind is not ScenarioKind.AGGREGATION and not self.fixed_entities:
            raise ConfigError(f"{self.kind.value} needs at least one fixed entity")
        for pos in self.fixed_entities:
            if not self.in_grid(pos):
                raise ConfigError(f"fixed entity {pos} outside {self.grid_size}x{self.grid_size} grid")

    def in_grid(self, pos: tuple[int, int]) -> bool:
        return 0 <= pos[0] < self.grid_size and 0 <= pos[1] < self.grid_size

    @property
    def obs_dim(self) -> int:
        return 2 + 2 * (self.n_agents - 1) + 2 * len(self.fixed_entities)

    @property
    def feature_dim(self) -> int:
        return (self.n_agents - 1) + len(self.fixed_entities)

    @property
    def obstacle_penalty(self) -> float:
        """Large collision constant for obstacle avoidance."""
        return -10.0 * self.reward_c

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "grid_size": self.grid_size,
            "n_agents": self.n_agents,
            "fixed_entities": [list(p) for p in self.fixed_entities],
            "episode_length": self.episode_length,
            "perception_range": self.perception_range,
            "reward_c": self.reward_c,
            "aggregation_threshold": self.aggregation_threshold,
            "exploration_penalty": self.exploration_penalty,
            "cohesion_includes_fixed": self.cohesion_includes_fixed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("scenario config requires a 'kind' key")
        kwargs = dict(data)
        try:
            kwargs["kind"] = ScenarioKind(kwargs["kind"])
        except ValueError:
            valid = [k.value for k in ScenarioKind]
            raise ConfigError(f"unknown scenario kind {data['kind']!r}; expected one of {valid}") from None
        if kwargs.get("fixed_entities") is not None:
            kwargs["fixed_entities"] = tuple(tuple(p) for p in kwargs["fixed_entities"])
        return cls(**kwargs)


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    """Read a TOML scenario file; unspecified keys take the defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


@dataclass(frozen=True)
class GridState:
    """Global state: all swarm agent cells, the fixed entities, and the step count."""

    agent_positions: tuple[tuple[int, int], ...]
    fixed_entities: tuple[tuple[int, int], ...]
    timestep: int = 0


@dataclass
class StepResult:
    next_state: GridState
    rewards: np.ndarray
    done: bool


# --- initialization modes -------------------------------------------------


@dataclass(frozen=True)
class FixedPositions:
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "positions", tuple((int(x), int(y)) for x, y in self.positions)
        )


@dataclass(frozen=True)
class UniformRandom:
    pass


@dataclass(frozen=True)
class SampleFromDemos:
    """Draw the joint start uniformly from starts recorded in a demo pool."""

    initial_positions: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        if not self.initial_positions:
            raise ConfigError("SampleFromDemos requires a non-empty pool of starts")


InitMode = FixedPositions | UniformRandom | SampleFromDemos


def reset(
    config: ScenarioConfig,
    init: InitMode,
    rng: int | np.random.Generator,
) -> GridState:
    """Start an episode: timestep 0, agents placed per the init mode.

    UniformRandom draws each agent independently from cells not occupied by
    a fixed entity; demo-sampled and explicit starts are used verbatim.
    """
    rng = as_rng(rng)
    if isinstance(init, FixedPositions):
        if len(init.positions) != config.n_agents:
            raise ValueError(
                f"expected {config.n_agents} start positions, got {len(init.positions)}"
            )
        for pos in init.positions:
            if not config.in_grid(pos):
                raise ValueError(f"start position {pos} outside grid")
        positions = init.positions
    elif isinstance(init, UniformRandom):
        blocked = set(config.fixed_entities)
        free = [
            (x, y)
            for x in range(config.grid_size)
            for y in range(config.grid_size)
            if (x, y) not in blocked
        ]
        positions = tuple(free[rng.integers(len(free))] for _ in range(config.n_agents))
    elif isinstance(init, SampleFromDemos):
        positions = init.initial_positions[rng.integers(len(init.initial_positions))]
        if len(positions) != config.n_agents:
            raise ValueError("demo pool starts do not match n_agents")
    else:
        raise TypeError(f"unsupported init mode: {init!r}")
    return GridState(
        agent_positions=positions,
        fixed_entities=config.fixed_entities,
        timestep=0,
    )


def step(
    state: GridState, joint_action: "list[int] | np.ndarray", config: ScenarioConfig
) -> StepResult:
    """Advance one step: move every agent, then score the landed-in state."""
    if state.timestep >= config.episode_length:
        raise ValueError(f"episode already terminal at timestep {state.timestep}")
    if len(joint_action) != config.n_agents:
        raise ValueError(
            f"joint action length {len(joint_action)} != n_agents {config.n_agents}"
        )
    hi = config.grid_size - 1
    moved = []
    for (x, y), action in zip(state.agent_positions, joint_action):
        a = int(action)
        if not 0 <= a < N_ACTIONS:
            raise ValueError(f"invalid action {action}")
        dx, dy = _MOVES[a]
        moved.append((min(max(x + dx, 0), hi), min(max(y + dy, 0), hi)))
    next_state = GridState(
        agent_positions=tuple(moved),
        fixed_entities=state.fixed_entities,
        timestep=state.timestep + 1,
    )
    if config.kind is ScenarioKind.AGGREGATION:
        rewards = reward_aggregation(next_state, config)
    elif config.kind is ScenarioKind.HOMING:
        rewards = reward_homing(next_state, config)
    else:
        rewards = reward_obstacle(state, next_state, config)
    return StepResult(
        next_state=next_state,
        rewards=rewards,
        done=next_state.timestep == config.episode_length,
    )


def observe(state: GridState, agent_index: int, config: ScenarioConfig) -> np.ndarray:
    """Local observation of one agent.

    Layout: own cell scaled to [0, 1], then per teammate (ascending index)
    and per fixed entity (config order) the displacement scaled by the grid
    size, or the out-of-range sentinel beyond the perception range
    (Chebyshev distance).
    """
    if not 0 <= agent_index < config.n_agents:
        raise ValueError(f"agent_index {agent_index} out of range")
    ox, oy = state.agent_positions[agent_index]
    hi = config.grid_size - 1
    g = config.grid_size
    values = [ox / hi, oy / hi]
    others = [
        p for i, p in enumerate(state.agent_positions) if i != agent_index
    ] + list(state.fixed_entities)
    for px, py in others:
        dx, dy = px - ox, py - oy
        if max(abs(dx), abs(dy)) <= config.perception_range:
            values.extend((dx / g, dy / g))
        else:
            values.extend(OUT_OF_RANGE)
    return np.array(values, dtype=np.float64)


def observe_all(state: GridState, config: ScenarioConfig) -> np.ndarray:
    """Stacked observations for every agent, shape (n_agents, obs_dim)."""
    return np.stack([observe(state, i, config) for i in range(config.n_agents)])


def _dist(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    # sqrt of an exact small integer: bit-identical across platforms
    return math.sqrt(dx * dx + dy * dy)


def cohesion(state: GridState, agent_index: int, config: ScenarioConfig) -> float:
    """Negative distance to the nearest neighbor of one swarm agent."""
    own = state.agent_positions[agent_index]
    neighbors = [
        p for i, p in enumerate(state.agent_positions) if i != agent_index
    ]
    if config.cohesion_includes_fixed:
        neighbors += list(state.fixed_entities)
    return -min(_dist(own, p) for p in neighbors)


def reward_aggregation(state: GridState, config: ScenarioConfig) -> np.ndarray:
    """Shared clustering reward: count agents whose cohesion clears the
    threshold; everyone gets count*c when at least two do, -c otherwise."""
    if config.kind is not ScenarioKind.AGGREGATION:
        raise ValueError(f"aggregation reward called for {config.kind.value}")
    t = config.aggregation_threshold
    k = sum(
        1 for i in range(config.n_agents) if cohesion(state, i, config) > t
    )
    value = k * config.reward_c if k > 1 else -config.reward_c
    return np.full(config.n_agents, value, dtype=np.float64)


def reward_homing(state: GridState, config: ScenarioConfig) -> np.ndarray:
    """Per-agent reward: best (least negative) cohesion to any home cell."""
    if config.kind is not ScenarioKind.HOMING:
        raise ValueError(f"homing reward called for {config.kind.value}")
    return np.array(
        [
            max(-_dist(pos, home) for home in state.fixed_entities)
            for pos in state.agent_positions
        ],
        dtype=np.float64,
    )


def reward_obstacle(
    prev_state: GridState, state: GridState, config: ScenarioConfig
) -> np.ndarray:
    """Sparse avoidance reward: a large negative constant on an obstacle
    cell, a small penalty for not changing cell this step, 0 otherwise."""
    if config.kind is not ScenarioKind.OBSTACLE_AVOIDANCE:
        raise ValueError(f"obstacle reward called for {config.kind.value}")
    obstacles = set(state.fixed_entities)
    rewards = np.zeros(config.n_agents, dtype=np.float64)
    for i, (pos, prev) in enumerate(
        zip(state.agent_positions, prev_state.agent_positions)
    ):
        if pos in obstacles:
            rewards[i] = config.obstacle_penalty
        elif pos == prev:
            rewards[i] = config.exploration_penalty
    return rewards
