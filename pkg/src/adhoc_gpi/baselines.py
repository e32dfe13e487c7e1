"""Comparison learners: oracle, robust (team-randomised) and PLASTIC-best.

PLASTIC-best skips type inference and simply deploys the library entry that
scores best against the target team, i.e. inference that is already correct.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .core import discounted_return, rollout
from .errors import ConfigError, StateError
from .sf import SFHyperparams, SFLearnerPolicy, sfql_train
from .stats import iqm


def train_oracle(env, target_teammates, hp: SFHyperparams, rng: np.random.Generator,
                 task_weight=None, learner_slot: int = 0) -> SFLearnerPolicy:
    """SFQL from scratch with the target team (privileged reference)."""
    w = env.team_weight if task_weight is None else task_weight
    policy, _ = sfql_train(env, target_teammates, w, hp, rng, learner_slot)
    return policy


def robust_hyperparams(hp_per_policy: SFHyperparams, library_size: int) -> SFHyperparams:
    """Budget parity: the robust learner gets the whole library's training steps."""
    return replace(hp_per_policy, total_timesteps=hp_per_policy.total_timesteps * library_size)


def train_robust(env, source_teams: Sequence[Sequence], hp_total: SFHyperparams,
                 rng: np.random.Generator, task_weight=None, learner_slot: int = 0) -> SFLearnerPolicy:
    """One SFQL learner; a source team is drawn uniformly at every episode start."""
    if len(source_teams) < 1:
        raise ConfigError("robust training needs at least one source team")
    w = env.team_weight if task_weight is None else task_weight
    policy, _ = sfql_train(env, None, w, hp_total, rng, learner_slot, teams=[list(t) for t in source_teams])
    return policy


def episode_returns(env, policy, teammates, episodes: int, rng: np.random.Generator,
                    gamma: float, learner_slot: int = 0) -> np.ndarray:
    out = np.empty(episodes)
    for k in range(episodes):
        env.reset(rng)
        out[k] = discounted_return(rollout(env, policy, teammates, rng, learner_slot=learner_slot,
                                           record_obs=False), gamma)
    return out


def plastic_best(library, env, target_teammates, eval_episodes: int = 100,
                 rng: Optional[np.random.Generator] = None, gamma: float = 0.95,
                 learner_slot: int = 0, seed: Optional[int] = None) -> tuple[int, list]:
    """Index of the entry with the highest IQM return against the target team.

    Every entry is scored on the same episode seeds; ties go to the lowest index.
    Returns ``(index, per_entry_iqm)``.
    """
    entries = list(library)
    if not entries:
        raise StateError("PLASTIC-best needs a non-empty library")
    if seed is None:
        rng = rng if rng is not None else np.random.default_rng()
        seed = int(rng.integers(2**63))
    scores = []
    for e in entries:
        policy = e.policy if hasattr(e, "policy") else e
        rets = episode_returns(env, policy, target_teammates, eval_episodes,
                               np.random.default_rng(seed), gamma, learner_slot)
        scores.append(iqm(rets))
    return int(np.argmax(scores)), scores
