"""Shared fixtures: scenario configs, rigged policies, and a small demo pool."""

import numpy as np
import pytest

from swarmrecon.gridworld import ScenarioConfig, ScenarioKind
from swarmrecon.mlp import MlpParams
from swarmrecon.ppo import PpoConfig, SharedPolicy


@pytest.fixture
def agg_config():
    return ScenarioConfig(kind=ScenarioKind.AGGREGATION)


@pytest.fixture
def homing_config():
    return ScenarioConfig(kind=ScenarioKind.HOMING)


@pytest.fixture
def obstacle_config():
    return ScenarioConfig(kind=ScenarioKind.OBSTACLE_AVOIDANCE)


def zero_mlp(layer_sizes, head):
    """All-zero network: softmax outputs are uniform, sigmoid outputs 0.5."""
    return MlpParams(
        layer_sizes=list(layer_sizes),
        weights=[
            np.zeros((a, b)) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])
        ],
        biases=[np.zeros(b) for b in layer_sizes[1:]],
        head=head,
    )


def constant_action_policy(obs_dim: int, action: int) -> SharedPolicy:
    """Shared policy whose actor all but surely picks one action."""
    actor = zero_mlp([obs_dim, 8, 5], "softmax")
    actor.biases[-1][action] = 25.0
    critic = zero_mlp([obs_dim, 8, 1], "linear")
    return SharedPolicy(actor=actor, critic=critic)


def scripted_homing_select(config):
    """Hand-coded near-optimal homing actor: step toward the nearest home."""

    def select(obs, rng):
        actions = []
        hi = config.grid_size - 1
        for row in obs:
            x, y = row[0] * hi, row[1] * hi
            best, best_d = 0, np.inf
            for hx, hy in config.fixed_entities:
                d = (hx - x) ** 2 + (hy - y) ** 2
                if d < best_d:
                    best, best_d = (hx, hy), d
            hx, hy = best
            if abs(hx - x) >= max(abs(hy - y), 0.5):
                actions.append(1 if hx > x else 2)
            elif abs(hy - y) >= 0.5:
                actions.append(3 if hy > y else 4)
            else:
                actions.append(0)
        return np.array(actions), None, None

    return select


@pytest.fixture
def fast_ppo():
    return PpoConfig(epochs=4, hidden_sizes=(32, 32))
