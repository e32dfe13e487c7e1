"""Learner difference rewards and the value functions built on them.

The difference reward of the learner is the realised team reward minus the
team reward expected had the learner acted uniformly at random, all else
held equal:

    dr = r - (1/|A|) * sum_b r(s, <a_-learner, b>)

Counterfactual transitions are re-simulated from a clone of the pre-step
environment (rng included), so stochastic dynamics replay the same draws.
``counterfactual="frozen_next_state"`` instead scores every counterfactual
action against the realised next state; in both grid worlds the reward is a
function of (s, s') only, so that mode yields dr == 0 everywhere.

Two ways to turn difference rewards into per-entry action values:

* linear: fit ``w_dr`` with least squares on (phi, dr) samples and read
  ``Q_dr(s, a) = psi(s, a) . w_dr`` off the entry's successor features;
* general: TD(0) policy evaluation of the fixed entry policy on dr.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import counterfactual_step_reward
from .errors import CapabilityError, ConfigError, InputError, StateError
from .sf import LinearSF, TabularSF

COUNTERFACTUAL_MODES = ("resimulate", "frozen_next_state")


def difference_reward(env, state, joint_action: Sequence[int], realized_reward: float,
                      learner_slot: int = 0, counterfactual: str = "resimulate",
                      next_state=None) -> float:
    """Learner's difference reward for one transition.

    ``env`` must sit at the pre-step point (state and rng) of the transition;
    it is only cloned, never stepped.
    """
    if counterfactual not in COUNTERFACTUAL_MODES:
        raise ConfigError(f"unknown counterfactual mode {counterfactual!r}")
    if not getattr(env, "supports_clone", False):
        raise CapabilityError(f"{type(env).__name__} cannot clone its state")
    n = env.n_actions
    joint = list(joint_action)
    if counterfactual == "frozen_next_state":
        if next_state is None:
            raise InputError("frozen_next_state needs the realised next state")
        total = 0.0
        for b in range(n):
            joint[learner_slot] = b
            total += env.frozen_reward(state, tuple(joint), next_state)
        return float(realized_reward - total / n)
    others = [a for i, a in enumerate(joint) if i != learner_slot]
    total = 0.0
    for b in range(n):
        total += counterfactual_step_reward(env, state, others, b, learner_slot)
    return float(realized_reward - total / n)


@dataclass
class DRSample:
    features: np.ndarray
    dr: float
    reward: float = 0.0
    obs_key: Optional[bytes] = None
    action: Optional[int] = None


@dataclass
class DRWeight:
    w_dr: np.ndarray
    residual_rms: float
    n_samples: int
    rank: int
    singular_values: list = field(default_factory=list)

    def report(self) -> dict:
        return {"w_dr": self.w_dr.tolist(), "residual_rms": self.residual_rms,
                "n_samples": self.n_samples, "rank": self.rank,
                "singular_values": list(self.singular_values)}


def _team_for(env, teammates, learner_slot):
    if len(teammates) != env.n_agents - 1:
        raise ConfigError("teammate count does not match the environment")
    return [i for i in range(env.n_agents) if i != learner_slot]


def _dr_episode(env, policy, teammates, rng, learner_slot, counterfactual, on_step):
    """Run one episode of ``policy`` computing dr for every transition."""
    others = _team_for(env, teammates, learner_slot)
    env.reset(rng)
    if getattr(env.state, "terminal", False):
        return
    for _ in range(env.horizon):
        obs = env.observe(learner_slot)
        a = int(policy.act(obs, rng))
        joint = [0] * env.n_agents
        joint[learner_slot] = a
        for pol, i in zip(teammates, others):
            joint[i] = int(pol.act(env.observe(i), rng))
        pre = env.clone()
        state = pre.state
        out = env.step(joint)
        # resimulation replays from the clone as is; frozen mode scores against s'
        dr = difference_reward(pre, state if counterfactual == "frozen_next_state" else None, joint,
                               out.reward, learner_slot, counterfactual, out.next_state)
        next_obs = env.observe(learner_slot)
        on_step(obs, a, out, dr, next_obs)
        if out.terminal:
            return


def collect_dr_dataset(env, entry, source_teammates, episodes: int = 10,
                       rng: Optional[np.random.Generator] = None, learner_slot: int = 0,
                       counterfactual: str = "resimulate") -> list[DRSample]:
    """Roll out the entry's fixed policy with its source team; one sample per transition."""
    if episodes < 1:
        raise ConfigError("episodes must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    policy = entry.policy if hasattr(entry, "policy") else entry
    samples: list[DRSample] = []

    def record(obs, a, out, dr, next_obs):
        samples.append(DRSample(np.array(out.features, dtype=float), dr, float(out.reward), None, a))

    for _ in range(episodes):
        _dr_episode(env, policy, source_teammates, rng, learner_slot, counterfactual, record)
    return samples


def fit_dr_weights(samples: Sequence[DRSample]) -> DRWeight:
    """Ordinary least squares of dr on phi (minimum-norm when rank deficient)."""
    if not samples:
        raise InputError("cannot fit difference-reward weights on an empty dataset")
    X = np.stack([np.asarray(s.features, dtype=float) for s in samples])
    y = np.array([s.dr for s in samples], dtype=float)
    w, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ w
    return DRWeight(w, float(np.sqrt(np.mean(resid ** 2))), len(samples), int(rank), sv.tolist())


def dr_q(entry, observation) -> np.ndarray:
    """Difference-reward action values of a library entry at one observation."""
    if entry.dr_weight is not None:
        return entry.sf.psi(observation) @ entry.dr_weight
    if entry.dr_q is not None:
        return entry.dr_q.psi(observation)[:, 0]
    raise StateError("library entry has neither a difference-reward weight nor a DR value table")


def td_policy_eval_dr(env, entry, source_teammates, episodes: int = 2500, alpha: float = 0.1,
                      gamma: float = 0.95, rng: Optional[np.random.Generator] = None,
                      learner_slot: int = 0, counterfactual: str = "resimulate",
                      approximator: Optional[str] = None):
    """On-policy TD(0) evaluation of the entry's fixed policy on difference rewards.

    Q(s, a) += alpha * (dr + gamma * Q(s', pi(s')) - Q(s, a)); no bootstrap
    past a true terminal.  Returns a d == 1 approximator of the same kind as
    the entry's SFs unless ``approximator`` overrides it.
    """
    if not 0.0 <= gamma < 1.0:
        raise ConfigError("gamma must lie in [0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    policy = entry.policy if hasattr(entry, "policy") else entry
    kind = approximator or getattr(getattr(policy, "sf", None), "kind", "tabular")
    if kind == "tabular":
        table = TabularSF(env.n_actions, 1)
    elif kind == "linear":
        f = policy.sf.features
        table = LinearSF(env.n_actions, 1, f.grid_size, f.n_channels, f.pairs, f.with_teammate, f.bias)
    else:
        raise ConfigError(f"unknown approximator {kind!r}")
    target = np.zeros(1)

    def update(obs, a, out, dr, next_obs):
        if out.terminal and not out.truncated:
            target[0] = dr
        else:
            target[0] = dr + gamma * table.psi(next_obs)[int(policy.act(next_obs, None)), 0]
        table.update(obs, a, target, alpha)

    for _ in range(episodes):
        _dr_episode(env, policy, source_teammates, rng, learner_slot, counterfactual, update)
    table.episodes_used = episodes
    return table
