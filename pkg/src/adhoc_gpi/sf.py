"""Successor-feature Q-learning (SFQL) and the SF approximators it trains.

Two approximators share one small interface (``psi``, ``update``,
``records``/``from_records``):

* ``TabularSF`` keys an (n_actions, d) array on the packed observation bytes.
  It is exact on enumerable problems but cannot generalise to unseen
  observations.
* ``LinearSF`` is linear in sparse one-hot displacement features of the
  agent-centric view (observer-to-cell offsets per channel, optionally
  teammate-to-cell offsets).  It generalises across object layouts and
  teammate positions, which zero-shot evaluation against a new team needs.

A scalar action-value table is just an approximator with ``d == 1``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError


class DisplacementFeatures:
    """Sparse one-hot features of signed offsets on a ``grid_size`` grid.

    Blocks: one per observed channel (observer -> cell), then, with
    ``pairs=True``, one per non-teammate channel (teammate -> cell), then a
    bias unit.  The walls channel (last) and the teammate channel (second to
    last) follow the layout used by both grid worlds.
    """

    def __init__(self, grid_size: int, n_channels: int, pairs: bool = False, teammate: bool = True,
                 bias: bool = True):
        self.grid_size = grid_size
        self.bias = bias
        self.n_channels = n_channels
        self.pairs = pairs
        self.with_teammate = teammate
        self.span = 2 * grid_size - 1
        self.block = self.span * self.span
        self.teammate = n_channels - 2
        # everything but walls, and optionally without the teammate channel
        self.n_direct = n_channels - 1 if teammate else n_channels - 2
        n_blocks = self.n_direct + (self.teammate if pairs else 0)
        self.size = n_blocks * self.block + (1 if bias else 0)
        self.name = (f"displacement{'+pairs' if pairs else ''}{'' if teammate else '-mate'}"
                     f"{'' if bias else '-bias'}:{grid_size}:{n_channels}")

    def __call__(self, obs) -> np.ndarray:
        idx = obs.cache.get(self.name)
        if idx is not None:
            return idx
        span, g1, block = self.span, self.grid_size - 1, self.block
        r0, c0 = obs.origin
        # index of cell (r, c) seen from (r0, c0): (r - r0 + g1) * span + (c - c0 + g1)
        base = (g1 - r0) * span + (g1 - c0)
        out = [self.size - 1] if self.bias else []
        cells = [pts.tolist() for pts in obs.cells]
        for k in range(self.n_direct):
            off = k * block + base
            out.extend(off + r * span + c for r, c in cells[k])
        if self.pairs:
            for mr, mc in cells[self.teammate]:
                mbase = (g1 - mr) * span + (g1 - mc)
                for k in range(self.teammate):
                    off = (self.n_direct + k) * block + mbase
                    out.extend(off + r * span + c for r, c in cells[k])
        idx = np.array(out, dtype=np.intp)
        obs.cache[self.name] = idx
        return idx


class TabularSF:
    kind = "tabular"

    def __init__(self, n_actions: int, feature_dim: int):
        self.n_actions = n_actions
        self.feature_dim = feature_dim
        self.table: dict[bytes, np.ndarray] = {}
        self._zeros = np.zeros((n_actions, feature_dim))
        self._zeros.flags.writeable = False

    def psi(self, obs) -> np.ndarray:
        row = self.table.get(obs.key() if not isinstance(obs, bytes) else obs)
        return self._zeros if row is None else row

    def update(self, obs, action: int, target: np.ndarray, alpha: float, current=None) -> None:
        key = obs.key() if not isinstance(obs, bytes) else obs
        row = self.table.get(key)
        if row is None:
            row = np.zeros((self.n_actions, self.feature_dim))
            self.table[key] = row
        row[action] += alpha * (target - row[action])

    def spec(self) -> dict:
        return {"kind": self.kind, "n_actions": self.n_actions, "feature_dim": self.feature_dim}

    def records(self):
        for key, row in self.table.items():
            yield key, row.ravel()

    @classmethod
    def from_records(cls, spec: dict, records) -> "TabularSF":
        sf = cls(spec["n_actions"], spec["feature_dim"])
        for key, vec in records:
            sf.table[key] = np.array(vec, dtype=float).reshape(sf.n_actions, sf.feature_dim)
        return sf

    def __len__(self) -> int:
        return len(self.table)


class LinearSF:
    kind = "linear"

    def __init__(self, n_actions: int, feature_dim: int, grid_size: int, n_channels: int,
                 pairs: bool = False, teammate: bool = True, bias: bool = True):
        self.n_actions = n_actions
        self.feature_dim = feature_dim
        self.features = DisplacementFeatures(grid_size, n_channels, pairs, teammate, bias)
        self.W = np.zeros((self.features.size, n_actions, feature_dim))

    def psi(self, obs) -> np.ndarray:
        return self.W[self.features(obs)].sum(axis=0)

    def update(self, obs, action: int, target: np.ndarray, alpha: float, current=None) -> None:
        """Normalised LMS step; ``current`` may pass in a fresh psi(obs)[action]."""
        idx = self.features(obs)
        if not len(idx):
            return  # nothing observed: psi is pinned at zero
        if current is None:
            current = self.W[idx, action].sum(axis=0)
        self.W[idx, action] += (alpha / len(idx)) * (target - current)

    def spec(self) -> dict:
        f = self.features
        return {"kind": self.kind, "n_actions": self.n_actions, "feature_dim": self.feature_dim,
                "grid_size": f.grid_size, "n_channels": f.n_channels, "pairs": f.pairs,
                "teammate": f.with_teammate, "bias": f.bias}

    def records(self):
        nz = np.flatnonzero(np.abs(self.W).reshape(len(self.W), -1).sum(axis=1))
        for i in nz:
            yield int(i).to_bytes(4, "little"), self.W[i].ravel()

    @classmethod
    def from_records(cls, spec: dict, records) -> "LinearSF":
        sf = cls(spec["n_actions"], spec["feature_dim"], spec["grid_size"], spec["n_channels"],
                 spec.get("pairs", False), spec.get("teammate", True), spec.get("bias", True))
        for key, vec in records:
            sf.W[int.from_bytes(key, "little")] = np.array(vec, dtype=float).reshape(
                sf.n_actions, sf.feature_dim)
        return sf


APPROXIMATORS = {"tabular": TabularSF, "linear": LinearSF}


def approximator_from_spec(spec: dict, records=()):
    try:
        cls = APPROXIMATORS[spec["kind"]]
    except KeyError:
        raise ConfigError(f"unknown approximator {spec.get('kind')!r}") from None
    return cls.from_records(spec, records)


@dataclass
class SFHyperparams:
    alpha: float = 0.1
    epsilon: float = 0.1
    gamma: float = 0.95
    total_timesteps: int = 200_000
    batch_size: int = 1
    seed: int = 0
    approximator: str = "tabular"
    pairs: bool = False
    teammate_features: bool = True
    bias: bool = True
    # training episodes start the learner on a uniformly drawn free cell
    exploring_starts: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.total_timesteps < 0:
            raise ConfigError("total_timesteps must be non-negative")
        if self.batch_size != 1:
            raise ConfigError("only per-transition updates (batch_size 1) are supported")
        if self.approximator not in APPROXIMATORS:
            raise ConfigError(f"unknown approximator {self.approximator!r}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def make_approximator(hp: SFHyperparams, env, feature_dim: Optional[int] = None):
    d = env.feature_dim if feature_dim is None else feature_dim
    if hp.approximator == "tabular":
        return TabularSF(env.n_actions, d)
    return LinearSF(env.n_actions, d, env.config.grid_size, env.n_channels, hp.pairs,
                    hp.teammate_features, hp.bias)


class SFLearnerPolicy:
    """Greedy policy argmax_a psi(s, a) . w, lowest action index on ties."""

    deterministic = True

    def __init__(self, sf, task_weight, train_info: Optional[dict] = None):
        self.sf = sf
        self.task_weight = np.asarray(task_weight, dtype=float)
        self.train_info = train_info or {}

    @property
    def n_actions(self) -> int:
        return self.sf.n_actions

    def q(self, obs, weight=None) -> np.ndarray:
        w = self.task_weight if weight is None else np.asarray(weight, dtype=float)
        return self.sf.psi(obs) @ w

    def act(self, obs, rng=None) -> int:
        return int(np.argmax(self.q(obs)))


def q_values(policy: SFLearnerPolicy, observation, weight) -> np.ndarray:
    """Action values of ``policy``'s SFs under an arbitrary reward weight."""
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (policy.sf.feature_dim,):
        raise ConfigError(f"weight must have length {policy.sf.feature_dim}")
    return policy.sf.psi(observation) @ weight


def sfql_train(env, teammates, task_weight, hp: SFHyperparams, rng: np.random.Generator,
               learner_slot: int = 0, teams: Optional[Sequence] = None, sf=None,
               on_transition=None):
    """Train a learner with SFQL against fixed teammates.

    ``teams`` (a list of teammate lists) switches on per-episode uniform team
    sampling; otherwise ``teammates`` is the single team.  ``on_transition``,
    if given, is called as ``f(obs, action, phi, next_obs, done, a_star)``
    after every update, before the next action is drawn.

    Returns the greedy policy and its SF approximator.
    """
    w = np.asarray(task_weight, dtype=float)
    if w.shape != (env.feature_dim,):
        raise ConfigError(f"task weight has length {len(w)} but the environment has "
                          f"{env.feature_dim} features")
    if teams is None:
        teams = [list(teammates)]
    for team in teams:
        if len(team) != env.n_agents - 1:
            raise ConfigError("teammate count does not match the environment")
    if sf is None:
        sf = make_approximator(hp, env)
    n_actions = env.n_actions
    alpha, gamma, eps = hp.alpha, hp.gamma, hp.epsilon
    draws = [0] * len(teams)
    steps = episodes = 0
    others = [i for i in range(env.n_agents) if i != learner_slot]

    while steps < hp.total_timesteps:
        t_idx = int(rng.integers(len(teams))) if len(teams) > 1 else 0
        team = teams[t_idx]
        draws[t_idx] += 1
        episodes += 1
        state = env.reset(rng)
        if hp.exploring_starts:
            g = env.config.grid_size
            while True:
                cell = divmod(int(rng.integers(g * g)), g)
                moved = env.place_agent(state, learner_slot, cell)
                if moved is not None:
                    env.set_state(moved)
                    break
        if getattr(env.state, "terminal", False):
            continue
        obs = env.observe(learner_slot)
        while True:
            psi_obs = sf.psi(obs)
            if rng.random() < eps:
                a = int(rng.integers(n_actions))
            else:
                a = int(np.argmax(psi_obs @ w))
            joint = [0] * env.n_agents
            joint[learner_slot] = a
            for pol, i in zip(team, others):
                joint[i] = int(pol.act(env.observe(i), rng))
            out = env.step(joint)
            steps += 1
            next_obs = env.observe(learner_slot)
            if out.terminal and not out.truncated:
                target = out.features
                a_star = None
            else:
                psi_next = sf.psi(next_obs)
                a_star = int(np.argmax(psi_next @ w))
                target = out.features + gamma * psi_next[a_star]
            sf.update(obs, a, target, alpha, psi_obs[a].copy())
            if on_transition is not None:
                on_transition(obs, a, out.features, next_obs, out.terminal and not out.truncated, a_star)
            if out.terminal or steps >= hp.total_timesteps:
                break
            obs = next_obs

    info = {"steps": steps, "episodes": episodes, "team_draws": draws, "hp_digest": hp.digest(),
            "seed": hp.seed, "total_timesteps": hp.total_timesteps}
    return SFLearnerPolicy(sf, w, info), sf


def enumerate_mdp(env, initial_state, teammates, learner_slot: int = 0):
    """Breadth-first enumeration of the learner's induced MDP.

    Teammates must be deterministic and the transition deterministic.  Returns
    ``(keys, obs_by_key, model)`` where ``model[key][a] = (phi, next_key, done)``.
    """
    others = [i for i in range(env.n_agents) if i != learner_slot]
    env.set_state(initial_state)
    start = env.observe(learner_slot)
    queue = [(start.key(), env.state.copy(), start)]
    model, obs_by_key, order = {}, {}, []
    while queue:
        key, state, obs = queue.pop(0)
        if key in model:
            continue
        model[key] = []
        obs_by_key[key] = obs
        order.append(key)
        for a in range(env.n_actions):
            env.set_state(state)
            joint = [0] * env.n_agents
            joint[learner_slot] = a
            for pol, i in zip(teammates, others):
                joint[i] = int(pol.act(env.observe(i), None))
            out = env.step(joint)
            nobs = env.observe(learner_slot)
            nkey = nobs.key()
            done = out.terminal and not out.truncated
            model[key].append((out.features.copy(), nkey, done))
            if not done and nkey not in model:
                queue.append((nkey, env.state.copy(), nobs))
    return order, obs_by_key, model


def sfql_sweep(model: dict, task_weight, gamma: float, tol: float = 1e-12, max_sweeps: int = 100_000,
               n_actions: int = 5):
    """Exhaustive-sweep SFQL: apply the SF update with unit step to every
    (s, a) of an enumerated model until the largest change drops below tol."""
    w = np.asarray(task_weight, dtype=float)
    d = len(w)
    sf = TabularSF(n_actions, d)
    for key in model:
        sf.table[key] = np.zeros((n_actions, d))
    for _ in range(max_sweeps):
        delta = 0.0
        for key, outcomes in model.items():
            row = sf.table[key]
            for a, (phi, nkey, done) in enumerate(outcomes):
                if done:
                    target = phi
                else:
                    nxt = sf.table[nkey]
                    target = phi + gamma * nxt[int(np.argmax(nxt @ w))]
                delta = max(delta, float(np.abs(target - row[a]).max()))
                row[a] = target
        if delta < tol:
            break
    return sf


def bellman_residual(sf: TabularSF, model: dict, task_weight, gamma: float) -> float:
    w = np.asarray(task_weight, dtype=float)
    worst = 0.0
    for key, outcomes in model.items():
        row = sf.psi(key)
        for a, (phi, nkey, done) in enumerate(outcomes):
            if done:
                target = phi
            else:
                nxt = sf.psi(nkey)
                target = phi + gamma * nxt[int(np.argmax(nxt @ w))]
            worst = max(worst, float(np.abs(row[a] - target).max()))
    return worst
