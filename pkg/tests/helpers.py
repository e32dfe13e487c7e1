"""Shared fixtures and independent oracles for the test suite."""

import copy

import numpy as np

from adhoc_gpi.envs import ForagingConfig, ForagingEnv


def board(objects, agents, grid_size=4, horizon=50, team_weight=(1.0, 1.0, 1.0)):
    """Foraging env on a fixed layout, already reset."""
    env = ForagingEnv(ForagingConfig(grid_size=grid_size, objects_per_type=1, horizon=horizon,
                                     team_weight=team_weight, objects=objects, agent_cells=agents))
    env.reset(np.random.default_rng(0))
    return env


def brute_force_dr(env, joint, learner_slot=0):
    """Realised reward minus the mean reward over every learner action.

    Each branch deep-copies the whole environment (rng included) and steps it;
    nothing from the package's counterfactual machinery is used.
    """
    def reward(j):
        sim = copy.deepcopy(env)
        return float(sim.step(j).reward)

    realised = reward(tuple(joint))
    alts = []
    for b in range(env.n_actions):
        j = list(joint)
        j[learner_slot] = b
        alts.append(reward(tuple(j)))
    return realised - sum(alts) / len(alts)


def enumerate_states(env, start, teammates, learner_slot=0):
    """Reachable learner MDP from ``start`` with deterministic teammates.

    Returns ``(states, succ)`` where ``succ[i][a] = (reward, phi, j, done)``
    and ``j`` indexes ``states`` (None when done).  States are identified by
    agent positions and remaining objects, not by observations; use a horizon
    long enough never to bind.
    """
    def ident(s):
        return (s.agent_positions.tobytes(), s.object_grid.tobytes())

    others = [i for i in range(env.n_agents) if i != learner_slot]
    states, index, succ = [start.copy()], {ident(start): 0}, []
    i = 0
    while i < len(states):
        s = states[i]
        row = []
        for a in range(env.n_actions):
            env.set_state(s)
            joint = [0] * env.n_agents
            joint[learner_slot] = a
            for pol, k in zip(teammates, others):
                joint[k] = int(pol.act(env.observe(k), None))
            out = env.step(tuple(joint))
            if out.terminal:
                row.append((out.reward, out.features, None, True))
                continue
            key = ident(env.state)
            if key not in index:
                index[key] = len(states)
                states.append(env.state.copy())
            row.append((out.reward, out.features, index[key], False))
        succ.append(row)
        i += 1
    return states, succ


def value_iteration(succ, gamma, n_actions=5, tol=1e-13):
    """Scalar Q* of an enumerated deterministic MDP."""
    q = np.zeros((len(succ), n_actions))
    while True:
        v = q.max(axis=1)
        new = np.array([[r + (0.0 if done else gamma * v[j]) for r, _, j, done in row] for row in succ])
        if np.abs(new - q).max() < tol:
            return new
        q = new


# PASS/FAIL lines of the acceptance suite, echoed in the session summary
ACCEPTANCE_LOG = []
