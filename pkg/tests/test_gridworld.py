"""Scenario environment: dynamics, observations, rewards, and config parsing."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmrecon.gridworld import (
    Action,
    ConfigError,
    FixedPositions,
    GridState,
    SampleFromDemos,
    ScenarioConfig,
    ScenarioKind,
    UniformRandom,
    cohesion,
    load_scenario_config,
    observe,
    observe_all,
    reset,
    reward_aggregation,
    reward_homing,
    reward_obstacle,
    step,
)


def make_state(config, positions, timestep=0):
    return GridState(tuple(positions), config.fixed_entities, timestep)


# --- reset -------------------------------------------------------------------


def test_reset_fixed_positions_pass_through(agg_config):
    state = reset(agg_config, FixedPositions([(0, 0), (5, 5), (9, 9)]), 7)
    assert state.agent_positions == ((0, 0), (5, 5), (9, 9))
    assert state.timestep == 0
    assert state.fixed_entities == agg_config.fixed_entities


def test_reset_uniform_random_deterministic(homing_config):
    a = reset(homing_config, UniformRandom(), 123)
    b = reset(homing_config, UniformRandom(), 123)
    assert a == b


def test_reset_uniform_random_avoids_obstacles():
    config = ScenarioConfig(
        kind=ScenarioKind.OBSTACLE_AVOIDANCE,
        fixed_entities=((3, 3), (6, 6), (3, 7)),
    )
    obstacles = set(config.fixed_entities)
    for seed in range(1000):
        state = reset(config, UniformRandom(), seed)
        assert not obstacles.intersection(state.agent_positions)


def test_reset_sample_from_demos_is_verbatim(homing_config):
    starts = (((1, 2), (3, 4), (5, 6)), ((0, 0), (9, 9), (4, 4)))
    for seed in range(100):
        state = reset(homing_config, SampleFromDemos(starts), seed)
        assert state.agent_positions in starts


def test_reset_rejects_bad_fixed_positions(agg_config):
    with pytest.raises(ValueError):
        reset(agg_config, FixedPositions([(0, 0)]), 0)
    with pytest.raises(ValueError):
        reset(agg_config, FixedPositions([(0, 0), (5, 5), (10, 3)]), 0)


# --- step ---------------------------------------------------------------------


def test_step_clamps_at_boundary(agg_config):
    state = make_state(agg_config, [(0, 0), (5, 5), (9, 9)])
    result = step(state, [Action.LEFT, Action.STOP, Action.STOP], agg_config)
    assert result.next_state.agent_positions[0] == (0, 0)


def test_step_unit_moves(agg_config):
    state = make_state(agg_config, [(4, 4), (5, 5), (9, 9)])
    result = step(state, [Action.RIGHT, Action.STOP, Action.STOP], agg_config)
    assert result.next_state.agent_positions[0] == (5, 4)
    for action, expect in [
        (Action.LEFT, (3, 4)),
        (Action.FORWARD, (4, 5)),
        (Action.BACKWARD, (4, 3)),
        (Action.STOP, (4, 4)),
    ]:
        result = step(state, [action, Action.STOP, Action.STOP], agg_config)
        assert result.next_state.agent_positions[0] == expect


def test_step_all_stop_runs_full_episode(agg_config):
    state = make_state(agg_config, [(1, 1), (5, 5), (9, 9)])
    results = []
    for _ in range(agg_config.episode_length):
        result = step(state, [Action.STOP] * 3, agg_config)
        results.append(result)
        assert result.next_state.agent_positions == ((1, 1), (5, 5), (9, 9))
        state = result.next_state
    assert len(results) == 50
    assert results[-1].done
    assert not any(r.done for r in results[:-1])


def test_step_terminal_state_raises(agg_config):
    state = make_state(agg_config, [(1, 1), (5, 5), (9, 9)], timestep=50)
    with pytest.raises(ValueError):
        step(state, [Action.STOP] * 3, agg_config)


def test_step_validates_joint_action(agg_config):
    state = make_state(agg_config, [(1, 1), (5, 5), (9, 9)])
    with pytest.raises(ValueError):
        step(state, [Action.STOP] * 2, agg_config)
    with pytest.raises(ValueError):
        step(state, [9, 0, 0], agg_config)


# --- observe -------------------------------------------------------------------


def test_observation_dims(agg_config, homing_config, obstacle_config):
    for config, expected in [(agg_config, 10), (homing_config, 12), (obstacle_config, 12)]:
        state = reset(config, UniformRandom(), 5)
        for i in range(config.n_agents):
            assert observe(state, i, config).shape == (expected,)


def test_observe_out_of_range_sentinel(agg_config):
    state = make_state(agg_config, [(0, 0), (9, 9), (0, 1)])
    obs = observe(state, 0, agg_config)
    assert tuple(obs[2:4]) == (0.7, 0.7)  # teammate at (9, 9), Chebyshev 9 > 6


def test_observe_displacement_values(agg_config):
    state = make_state(agg_config, [(2, 2), (4, 5), (2, 3)])
    obs = observe(state, 0, agg_config)
    assert obs[2] == pytest.approx(0.2)
    assert obs[3] == pytest.approx(0.3)


def test_observe_layout_and_bounds(homing_config):
    state = make_state(homing_config, [(3, 8), (3, 9), (9, 0)])
    obs = observe(state, 0, homing_config)
    assert obs[0] == pytest.approx(3 / 9)
    assert obs[1] == pytest.approx(8 / 9)
    # teammates precede fixed entities, config order for the latter
    assert tuple(obs[2:4]) == (0.0, 0.1)
    assert tuple(obs[4:6]) == (0.7, 0.7)
    # homes (1,1) and (8,1) are beyond Chebyshev range 6 from (3,8); (4,8) is not
    assert tuple(obs[6:8]) == (0.7, 0.7)
    assert tuple(obs[8:10]) == (0.7, 0.7)
    assert tuple(obs[10:12]) == (0.1, 0.0)
    assert np.all(obs >= -1.0) and np.all(obs <= 1.0)


@given(st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=50, deadline=None)
def test_observation_bounds_on_reachable_states(seed, data):
    config = ScenarioConfig(kind=ScenarioKind.HOMING)
    state = reset(config, UniformRandom(), seed)
    for _ in range(data.draw(st.integers(0, 10))):
        actions = data.draw(
            st.lists(st.integers(0, 4), min_size=3, max_size=3)
        )
        state = step(state, actions, config).next_state
    obs = observe_all(state, config)
    assert obs.shape == (3, 12)
    assert np.all(obs >= -1.0) and np.all(obs <= 1.0)


# --- rewards -------------------------------------------------------------------


def test_aggregation_reward_full_cluster(agg_config):
    state = make_state(agg_config, [(4, 4), (4, 5), (5, 4)])
    rewards = reward_aggregation(state, agg_config)
    assert np.array_equal(rewards, [3.0, 3.0, 3.0])


def test_aggregation_reward_no_cluster(agg_config):
    state = make_state(agg_config, [(0, 0), (5, 5), (9, 9)])
    rewards = reward_aggregation(state, agg_config)
    assert np.array_equal(rewards, [-1.0, -1.0, -1.0])


def test_aggregation_reward_pair_cluster(agg_config):
    state = make_state(agg_config, [(4, 4), (4, 4), (9, 9)])
    assert cohesion(state, 0, agg_config) == 0.0
    assert cohesion(state, 2, agg_config) == -math.sqrt(50)
    rewards = reward_aggregation(state, agg_config)
    assert np.array_equal(rewards, [2.0, 2.0, 2.0])


def test_aggregation_reward_is_shared(agg_config):
    rng = np.random.default_rng(0)
    for _ in range(50):
        state = reset(agg_config, UniformRandom(), int(rng.integers(1 << 30)))
        rewards = reward_aggregation(state, agg_config)
        assert len(set(rewards.tolist())) == 1


def test_homing_reward_on_home_cell(homing_config):
    home = homing_config.fixed_entities[0]
    state = make_state(homing_config, [home, (5, 5), (9, 9)])
    assert reward_homing(state, homing_config)[0] == 0.0


def test_homing_reward_nearest_home():
    config = ScenarioConfig(
        kind=ScenarioKind.HOMING, fixed_entities=((3, 4), (9, 9))
    )
    state = make_state(config, [(0, 0), (5, 5), (9, 9)])
    assert reward_homing(state, config)[0] == -5.0


def test_homing_reward_per_agent_independence(homing_config):
    h = homing_config.fixed_entities
    state = make_state(homing_config, [h[0], h[1], (0, 9)])
    rewards = reward_homing(state, homing_config)
    assert rewards[0] == 0.0 and rewards[1] == 0.0


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=3, max_size=3))
@settings(max_examples=100, deadline=None)
def test_homing_reward_bound(positions):
    config = ScenarioConfig(kind=ScenarioKind.HOMING)
    state = make_state(config, positions)
    rewards = reward_homing(state, config)
    assert np.all(rewards <= 0.0)
    assert np.all(rewards >= -config.grid_size * math.sqrt(2))


def test_obstacle_reward_triggers(obstacle_config):
    obstacle = obstacle_config.fixed_entities[0]
    prev = make_state(
        obstacle_config, [(obstacle[0] - 1, obstacle[1]), (0, 0), (9, 9)]
    )
    result = step(prev, [Action.RIGHT, Action.RIGHT, Action.STOP], obstacle_config)
    assert result.next_state.agent_positions[0] == obstacle
    assert result.rewards[0] == -10.0   # moved onto the obstacle
    assert result.rewards[1] == 0.0     # moved to a fresh free cell
    assert result.rewards[2] == -0.05   # did not move


def test_obstacle_clamped_move_counts_as_no_exploration(obstacle_config):
    prev = make_state(obstacle_config, [(9, 5), (0, 0), (1, 1)])
    result = step(prev, [Action.RIGHT, Action.RIGHT, Action.RIGHT], obstacle_config)
    assert result.rewards[0] == -0.05  # clamped at the wall, same cell


@given(st.data())
@settings(max_examples=100, deadline=None)
def test_obstacle_reward_trichotomy(data):
    config = ScenarioConfig(kind=ScenarioKind.OBSTACLE_AVOIDANCE)
    positions = data.draw(
        st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=3, max_size=3)
    )
    actions = data.draw(st.lists(st.integers(0, 4), min_size=3, max_size=3))
    result = step(make_state(config, positions), actions, config)
    allowed = {config.obstacle_penalty, config.exploration_penalty, 0.0}
    assert set(result.rewards.tolist()) <= allowed


def test_wrong_scenario_kind_errors(agg_config, homing_config, obstacle_config):
    state = make_state(agg_config, [(0, 0), (1, 1), (2, 2)])
    with pytest.raises(ValueError):
        reward_homing(state, agg_config)
    with pytest.raises(ValueError):
        reward_obstacle(state, state, agg_config)
    hstate = make_state(homing_config, [(0, 0), (1, 1), (2, 2)])
    with pytest.raises(ValueError):
        reward_aggregation(hstate, homing_config)
    with pytest.raises(ValueError):
        reward_aggregation(hstate, obstacle_config)


# --- invariants ------------------------------------------------------------------


def test_trajectory_determinism(homing_config):
    def run():
        state = reset(homing_config, UniformRandom(), 99)
        rng = np.random.default_rng(7)
        history = []
        for _ in range(homing_config.episode_length):
            actions = rng.integers(0, 5, size=3)
            result = step(state, actions, homing_config)
            history.append((result.next_state, result.rewards.tobytes()))
            state = result.next_state
        return history

    assert run() == run()


@given(st.integers(0, 2**16), st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), max_size=30))
@settings(max_examples=50, deadline=None)
def test_positions_stay_in_grid(seed, action_seq):
    config = ScenarioConfig(kind=ScenarioKind.AGGREGATION)
    state = reset(config, UniformRandom(), seed)
    for actions in action_seq:
        state = step(state, actions, config).next_state
        for pos in state.agent_positions:
            assert config.in_grid(pos)


@given(
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=3, max_size=3),
    st.integers(0, 4),
    st.integers(0, 4),
)
@settings(max_examples=60, deadline=None)
def test_translation_invariance_of_cohesion_and_homing(positions, dx, dy):
    config = ScenarioConfig(kind=ScenarioKind.HOMING)
    homes = [(1, 1), (2, 3), (4, 0)]
    base = ScenarioConfig(kind=ScenarioKind.HOMING, fixed_entities=homes)
    shifted = ScenarioConfig(
        kind=ScenarioKind.HOMING,
        fixed_entities=[(x + dx, y + dy) for x, y in homes],
    )
    state = GridState(tuple(positions), base.fixed_entities, 0)
    moved = GridState(
        tuple((x + dx, y + dy) for x, y in positions), shifted.fixed_entities, 0
    )
    for i in range(3):
        assert cohesion(state, i, base) == cohesion(moved, i, shifted)
    assert np.array_equal(reward_homing(state, base), reward_homing(moved, shifted))


def test_cohesion_can_include_fixed_entities():
    config = ScenarioConfig(kind=ScenarioKind.AGGREGATION, cohesion_includes_fixed=True)
    entity = config.fixed_entities[0]
    state = make_state(config, [entity, (9, 9), (9, 0)])
    assert cohesion(state, 0, config) == 0.0


# --- config --------------------------------------------------------------------


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        ScenarioConfig(kind=ScenarioKind.AGGREGATION, grid_size=1)
    with pytest.raises(ConfigError):
        ScenarioConfig(kind=ScenarioKind.AGGREGATION, n_agents=1)
    with pytest.raises(ConfigError):
        ScenarioConfig(kind=ScenarioKind.HOMING, fixed_entities=((0, 11),))
    with pytest.raises(ConfigError):
        ScenarioConfig(kind=ScenarioKind.HOMING, episode_length=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(kind=ScenarioKind.HOMING, exploration_penalty=0.1)


def test_default_entity_counts(agg_config, homing_config, obstacle_config):
    assert len(agg_config.fixed_entities) == 2
    assert len(homing_config.fixed_entities) == 3
    assert len(obstacle_config.fixed_entities) == 3


def test_load_scenario_config(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(
        'kind = "homing"\nepisode_length = 25\nfixed_entities = [[1, 1], [8, 8]]\n'
    )
    config = load_scenario_config(path)
    assert config.kind is ScenarioKind.HOMING
    assert config.episode_length == 25
    assert config.fixed_entities == ((1, 1), (8, 8))
    assert config.grid_size == 10  # default preserved


def test_load_scenario_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_scenario_config(tmp_path / "missing.toml")
    bad_key = tmp_path / "bad_key.toml"
    bad_key.write_text('kind = "homing"\ngrid_sise = 12\n')
    with pytest.raises(ConfigError, match="grid_sise"):
        load_scenario_config(bad_key)
    bad_kind = tmp_path / "bad_kind.toml"
    bad_kind.write_text('kind = "flocking"\n')
    with pytest.raises(ConfigError, match="flocking"):
        load_scenario_config(bad_kind)
    bad_toml = tmp_path / "broken.toml"
    bad_toml.write_text("kind = [unterminated\n")
    with pytest.raises(ConfigError):
        load_scenario_config(bad_toml)
