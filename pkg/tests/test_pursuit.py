import numpy as np
import pytest
from hypothesis import given, strategies as st

from adhoc_gpi.core import rollout
from adhoc_gpi.envs import PursuitConfig, PursuitEnv, ScriptedPredator, StayPolicy, UniformRandomPolicy
from adhoc_gpi.errors import ConfigError, InputError, StateError

UP, DOWN, LEFT, RIGHT, STAY = range(5)
seeds = st.integers(0, 2**32 - 1)


def fixed(prey, predators, grid_size=9, horizon=40):
    """Prey pinned to 1x1 regions so they cannot move; predators at given cells."""
    spec = [{"kind": kind, "spawn": cell, "region": (cell[0], cell[0], cell[1], cell[1])}
            for kind, cell in prey]
    env = PursuitEnv(PursuitConfig(grid_size=grid_size, prey=spec, predator_cells=predators, horizon=horizon))
    env.reset(np.random.default_rng(0))
    return env


def test_single_predator_catches_easy_prey():
    env = fixed([("easy", (2, 2)), ("hard", (6, 6))], [(2, 1), (8, 8), (0, 8)])
    out = env.step((RIGHT, STAY, STAY))
    assert out.features.tolist() == [1, 0]
    assert out.reward == 1.0
    assert not env.state.alive[0]


def test_hard_prey_needs_two_predators():
    env = fixed([("hard", (4, 4))], [(4, 2), (8, 8), (0, 0)])
    out = env.step((RIGHT, STAY, STAY))  # one predator adjacent
    assert out.features.tolist() == [0]
    env = fixed([("hard", (4, 4))], [(4, 2), (4, 6), (0, 0)])
    out = env.step((RIGHT, LEFT, STAY))  # flanked from both sides
    assert out.features.tolist() == [1]


def test_no_predator_near_any_prey():
    env = PursuitEnv(grid_size=13)
    env.reset(np.random.default_rng(0))
    out = env.step((STAY, STAY, STAY))
    assert out.features.tolist() == [0, 0, 0, 0]


def test_prey_cannot_dodge_a_completed_capture():
    # the prey's region lets it move, but predators resolve first
    spec = [{"kind": "easy", "spawn": (4, 4), "region": (3, 5, 3, 5)}]
    for seed in range(20):
        env = PursuitEnv(PursuitConfig(grid_size=9, prey=spec, predator_cells=[(4, 3), (0, 0), (8, 8)]))
        env.reset(np.random.default_rng(seed))
        assert env.step((RIGHT, STAY, STAY)).features.tolist() == [1]


def test_invalid_actions_and_terminal():
    env = fixed([("easy", (2, 2))], [(2, 1), (8, 8), (0, 8)])
    with pytest.raises(InputError):
        env.step((RIGHT, STAY))
    with pytest.raises(InputError):
        env.step((RIGHT, 7, STAY))
    env.step((RIGHT, STAY, STAY))
    assert env.state.terminal
    with pytest.raises(StateError):
        env.step((STAY, STAY, STAY))


def test_config_validation():
    with pytest.raises(ConfigError):
        PursuitConfig(grid_size=9, prey=[{"kind": "easy", "region": (0, 9, 0, 2)}])
    with pytest.raises(ConfigError):
        PursuitConfig(grid_size=9, prey=[{"kind": "medium", "region": (0, 2, 0, 2)}])
    with pytest.raises(ConfigError):
        PursuitConfig(grid_size=9, team_weight=[1, 1])


@given(seeds)
def test_capture_monotonicity_and_prey_containment(seed):
    rng = np.random.default_rng(seed)
    env = PursuitEnv(grid_size=9, horizon=40)
    env.reset(rng)
    log = rollout(env, UniformRandomPolicy(), [ScriptedPredator([0, 1]), ScriptedPredator([1, 2, 3])], rng,
                  record_snapshots=True)
    assert set(log.features.sum(axis=0).tolist()) <= {0.0, 1.0}
    for snap in log.snapshots:
        for k, r, c, _ in snap["prey"]:
            r0, r1, c0, c1 = env.config.prey[k]["region"]
            assert r0 <= r <= r1 and c0 <= c <= c1
    alive = [len(s["prey"]) for s in log.snapshots]
    assert alive == sorted(alive, reverse=True)


def test_clone_replays_the_same_prey_moves():
    env = PursuitEnv(grid_size=9)
    env.reset(np.random.default_rng(4))
    twin = env.clone()
    for _ in range(10):
        env.step((STAY, STAY, STAY))
        twin.step((STAY, STAY, STAY))
    assert np.array_equal(env.state.prey_positions, twin.state.prey_positions)


def test_scripted_predator_moves_up_towards_prey_above():
    env = fixed([("easy", (1, 4))], [(4, 4), (8, 8), (0, 8)])
    assert ScriptedPredator([0]).act(env.observe(0)) == UP


def test_scripted_predator_stays_when_all_prey_captured():
    env = fixed([("easy", (2, 2))], [(2, 1), (8, 8), (0, 8)])
    env.step((RIGHT, STAY, STAY))
    assert ScriptedPredator([0]).act(env.observe(1)) == STAY
    assert ScriptedPredator([]).act(env.observe(1)) == STAY


def test_scripted_predator_ignores_right_side_prey():
    env = PursuitEnv(grid_size=9, horizon=40)
    rng = np.random.default_rng(2)
    m = 9 // 2
    for _ in range(10):
        env.reset(rng)
        log = rollout(env, ScriptedPredator([0, 2]), [StayPolicy(), StayPolicy()], rng, record_snapshots=True)
        cols = [s["agents"][0][1] for s in log.snapshots[2:]]
        # after leaving the centre block it never heads right of centre
        assert max(cols) <= m + 1
