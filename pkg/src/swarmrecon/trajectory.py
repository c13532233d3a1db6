"""Episode records and their replay validation.

A trajectory stores the initial global state plus, per step, the observation
each agent acted on, the joint action, the landed-in global state, and the
per-agent rewards. Episodes are pure functions of (config, start, actions),
so a stored trajectory can be re-simulated and compared bit-exactly; that
check guards demo files against corruption and drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import GridState, ScenarioConfig, observe_all, step


class TrajectoryError(ValueError):
    """A stored trajectory does not re-simulate to its own records."""


@dataclass
class StepRecord:
    state: GridState          # global state after the transition
    observations: np.ndarray  # (n_agents, obs_dim), observed before acting
    actions: np.ndarray       # (n_agents,) int
    rewards: np.ndarray       # (n_agents,) float


@dataclass
class Trajectory:
    scenario: str
    initial_state: GridState
    steps: list[StepRecord]
    seed: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def states(self) -> list[GridState]:
        """The per-step (post-transition) states, one per step."""
        return [rec.state for rec in self.steps]

    def total_reward(self) -> np.ndarray:
        """Per-agent reward summed over the episode."""
        return np.sum([rec.rewards for rec in self.steps], axis=0)


def replay_check(traj: Trajectory, config: ScenarioConfig) -> None:
    """Re-simulate the recorded actions and demand bit-exact agreement.

    Raises TrajectoryError on the first mismatch (scenario tag, step count,
    state chain, observations, or rewards).
    """
    if traj.scenario != config.kind.value:
        raise TrajectoryError(
            f"trajectory scenario {traj.scenario!r} != config {config.kind.value!r}"
        )
    if traj.n_steps != config.episode_length:
        raise TrajectoryError(
            f"trajectory has {traj.n_steps} steps, expected {config.episode_length}"
        )
    state = traj.initial_state
    for t, rec in enumerate(traj.steps):
        expected_obs = observe_all(state, config)
        if not np.array_equal(expected_obs, rec.observations):
            raise TrajectoryError(f"observation mismatch at step {t}")
        result = step(state, rec.actions, config)
        if result.next_state != rec.state:
            raise TrajectoryError(f"state mismatch at step {t}")
        if not np.array_equal(result.rewards, rec.rewards):
            raise TrajectoryError(f"reward mismatch at step {t}")
        state = result.next_state


def trajectory_to_record(traj: Trajectory) -> dict:
    """JSON-ready dict; rewards as decimal strings for exact round-trips."""
    return {
        "scenario": traj.scenario,
        "seed": traj.seed,
        "init_positions": [list(p) for p in traj.initial_state.agent_positions],
        "steps": [
            {
                "positions": [list(p) for p in rec.state.agent_positions],
                "observations": [[float(v) for v in row] for row in rec.observations],
                "actions": [int(a) for a in rec.actions],
                "rewards": [repr(float(r)) for r in rec.rewards],
            }
            for rec in traj.steps
        ],
    }


def trajectory_from_record(record: dict, config: ScenarioConfig) -> Trajectory:
    """Inverse of trajectory_to_record; fixed entities come from the config."""
    init_state = GridState(
        agent_positions=tuple(tuple(p) for p in record["init_positions"]),
        fixed_entities=config.fixed_entities,
        timestep=0,
    )
    steps = []
    for t, rec in enumerate(record["steps"]):
        steps.append(
            StepRecord(
                state=GridState(
                    agent_positions=tuple(tuple(p) for p in rec["positions"]),
                    fixed_entities=config.fixed_entities,
                    timestep=t + 1,
                ),
                observations=np.array(rec["observations"], dtype=np.float64),
                actions=np.array(rec["actions"], dtype=np.int64),
                rewards=np.array([float(r) for r in rec["rewards"]], dtype=np.float64),
            )
        )
    return Trajectory(
        scenario=record["scenario"],
        initial_state=init_state,
        steps=steps,
        seed=record.get("seed"),
    )
