import numpy as np
import pytest
from hypothesis import given, strategies as st

from adhoc_gpi.core import (AdHocTeamSpec, EpisodeLog, counterfactual_step_reward, discounted_return,
                            joint_with, read_logs, rollout, write_logs)
from adhoc_gpi.envs import ForagingEnv, PursuitEnv, ScriptedForager, ScriptedPredator, StayPolicy, UniformRandomPolicy
from adhoc_gpi.errors import CapabilityError, ConfigError, InputError

from helpers import board

UP, DOWN, LEFT, RIGHT, STAY = range(5)


# ---------------------------------------------------------------- returns

def test_discounted_return_direct_sum():
    assert discounted_return([1, 0, 1], 0.95) == pytest.approx(1.9025, abs=1e-15)


def test_discounted_return_all_zero():
    assert discounted_return([0, 0, 0, 0], 0.95) == 0.0


def test_discounted_return_geometric_series():
    # closed form of sum_{t<15} 0.95^t
    oracle = (1 - 0.95 ** 15) / (1 - 0.95)
    assert discounted_return([1.0] * 15, 0.95) == pytest.approx(oracle, abs=1e-12)


@given(st.lists(st.floats(0, 5), max_size=40), st.floats(0, 0.99))
def test_discounted_return_matches_power_sum(rewards, gamma):
    expect = sum(r * gamma ** t for t, r in enumerate(rewards))
    assert discounted_return(rewards, gamma) == pytest.approx(expect, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- team spec

def test_team_spec_validates_gamma_and_env():
    AdHocTeamSpec("foraging", 0, ("red",), 0.95, 1)
    with pytest.raises(ConfigError):
        AdHocTeamSpec("foraging", 0, (), 1.0, 1)
    with pytest.raises(ConfigError):
        AdHocTeamSpec("overcooked", 0, (), 0.9, 1)


def test_joint_with_inserts_and_overwrites():
    assert joint_with([3], 1, 0, 2) == (1, 3)
    assert joint_with([3], 1, 1, 2) == (3, 1)
    assert joint_with([4, 3], 0, 0, 2) == (0, 3)
    with pytest.raises(InputError):
        joint_with([1, 2, 3], 0, 0, 2)


# ---------------------------------------------------------------- rollout

def test_rollout_clears_adjacent_board_before_horizon():
    # every object within 3 steps of one of two greedy agents
    env = board([(0, 0, 0), (1, 0, 3), (2, 3, 3)], [(1, 0), (2, 3)])
    log = rollout(env, ScriptedForager([1, 1, 1]), [ScriptedForager([1, 1, 1])], np.random.default_rng(0))
    assert log.terminal
    assert len(log) <= 6 < 50
    assert log.features.sum(axis=0).tolist() == [1, 1, 1]


def test_rollout_horizon_one():
    env = ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)
    env.reset(np.random.default_rng(0))
    log = rollout(env, StayPolicy(), [StayPolicy()], np.random.default_rng(0), horizon=1)
    assert len(log) == 1
    assert log.transitions[0].terminal is False


def test_rollout_rejects_bad_horizon_and_team_size():
    env = ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)
    env.reset(np.random.default_rng(0))
    with pytest.raises(ConfigError):
        rollout(env, StayPolicy(), [StayPolicy()], np.random.default_rng(0), horizon=0)
    with pytest.raises(ConfigError):
        rollout(env, StayPolicy(), [], np.random.default_rng(0))


def _lines(env_factory, seed, learner, team):
    env = env_factory()
    rng = np.random.default_rng(seed)
    env.reset(rng)
    return list(rollout(env, learner, team, rng).to_lines())


@pytest.mark.parametrize("kind", ["foraging", "pursuit"])
def test_rollout_is_bit_reproducible(kind):
    if kind == "foraging":
        make = lambda: ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)  # noqa: E731
        team = [ScriptedForager([1, 0, 1])]
        learner = ScriptedForager([0, 1, 0])
    else:
        make = lambda: PursuitEnv(grid_size=9, horizon=40)  # noqa: E731
        team = [ScriptedPredator([0, 1]), ScriptedPredator([1, 2])]
        learner = ScriptedPredator([3])
    assert _lines(make, 7, learner, team) == _lines(make, 7, learner, team)


@given(st.integers(0, 2**32 - 1))
def test_linear_reward_identity_and_nonnegativity(seed):
    rng = np.random.default_rng(seed)
    for env, team in ((ForagingEnv(grid_size=6, objects_per_type=2, horizon=30), [UniformRandomPolicy()]),
                      (PursuitEnv(grid_size=9, horizon=30), [UniformRandomPolicy(), ScriptedPredator([1, 2])])):
        env.reset(rng)
        log = rollout(env, UniformRandomPolicy(), team, rng)
        for t in log.transitions:
            assert t.reward >= 0
            assert abs(t.reward - t.features @ env.team_weight) < 1e-12
        assert len(log) <= env.horizon


def test_episode_log_feature_sum_matches_collected_counts():
    env = ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)
    rng = np.random.default_rng(3)
    start = env.reset(rng).copy()
    log = rollout(env, ScriptedForager([1, 1, 1]), [ScriptedForager([1, 0, 0])], rng)
    assert np.array_equal(log.features.sum(axis=0), start.remaining() - env.state.remaining())


def test_episode_log_lines_round_trip(tmp_path):
    env = ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)
    rng = np.random.default_rng(5)
    logs = []
    for _ in range(3):
        env.reset(rng)
        log = rollout(env, ScriptedForager([1, 1, 0]), [ScriptedForager([0, 0, 1])], rng, team_id="t")
        log.chosen_library_index = [t % 2 for t in range(len(log))]
        logs.append(log)
    path = tmp_path / "episodes.jsonl"
    write_logs(logs, path)
    back = read_logs(path)
    assert [list(b.to_lines()) for b in back] == [list(a.to_lines()) for a in logs]
    assert all('"v": "v1"' in line for line in path.read_text().splitlines())


def test_episode_log_rejects_unknown_schema():
    with pytest.raises(InputError):
        EpisodeLog.from_lines(['{"v": "v0"}'])


# ---------------------------------------------------------------- counterfactuals

def test_counterfactual_learner_onto_sole_object():
    env = board([(0, 1, 2)], [(1, 1), (3, 0)])
    before = env.state.copy()
    assert counterfactual_step_reward(env, env.state, [STAY], RIGHT) == 1.0
    assert np.array_equal(env.state.agent_positions, before.agent_positions)
    assert np.array_equal(env.state.object_grid, before.object_grid)


def test_counterfactual_teammate_reward_still_counts():
    env = board([(1, 3, 1)], [(0, 0), (3, 0)])
    assert counterfactual_step_reward(env, env.state, [RIGHT], STAY) == 1.0


def test_counterfactual_enumeration_matches_hand_table():
    # learner at (1,1); red above, orange to the right, yellow two cells down.
    # teammate at (3,3) steps up onto nothing.
    env = board([(0, 0, 1), (1, 1, 2), (2, 3, 1)], [(1, 1), (3, 3)])
    got = [counterfactual_step_reward(env, env.state, [UP], b) for b in range(5)]
    hand = [1.0, 0.0, 0.0, 1.0, 0.0]  # up: red, down: empty, left: empty, right: orange, stay
    assert got == hand


def test_counterfactual_requires_clone_capability():
    class Opaque:
        n_agents = 2

    with pytest.raises(CapabilityError):
        counterfactual_step_reward(Opaque(), None, [0], 0)


def test_counterfactual_queries_do_not_perturb_rollouts():
    def run(query):
        env = PursuitEnv(grid_size=9, horizon=40)
        rng = np.random.default_rng(11)
        env.reset(rng)
        team = [ScriptedPredator([0, 1]), ScriptedPredator([2, 3])]
        learner = ScriptedPredator([1, 3])
        out = []
        for _ in range(40):
            joint = [learner.act(env.observe(0)), team[0].act(env.observe(1)), team[1].act(env.observe(2))]
            if query:
                for b in range(5):
                    counterfactual_step_reward(env, None, joint[1:], b)
            step = env.step(joint)
            out.append((step.reward, env.state.prey_positions.tolist(), env.state.predator_positions.tolist()))
            if step.terminal:
                break
        return out

    assert run(False) == run(True)
