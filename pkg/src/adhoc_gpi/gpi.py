"""Zero-shot execution: generalized policy improvement over a policy library.

At every step the learner plays

    a = argmax_a max_i Q_i(s, a)

where ``Q_i`` is entry i's difference-reward value (``with_dr``) or its
team-reward value ``psi_i . w`` (``without_dr``, the ablation).  Ties resolve
to the lowest (entry, action) pair in lexicographic order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import EpisodeLog, rollout
from .diff_reward import dr_q
from .errors import ConfigError, StateError

MODES = ("with_dr", "without_dr")


class GPIExecutor:
    """Read-only GPI policy over a library; records the winning entry per call."""

    deterministic = True

    def __init__(self, library, mode: str = "with_dr", team_weight=None):
        if mode not in MODES:
            raise ConfigError(f"unknown GPI mode {mode!r}")
        entries = list(library)
        if not entries:
            raise StateError("GPI needs a non-empty policy library")
        dims = {e.feature_dim for e in entries}
        if len(dims) != 1:
            raise StateError(f"library entries disagree on feature_dim: {sorted(dims)}")
        if mode == "with_dr":
            done = [e.dr_evaluated for e in entries]
            if not all(done):
                missing = [i for i, ok in enumerate(done) if not ok]
                raise StateError(f"entries {missing} have no difference-reward values; run the DR fit first")
        self.library = library
        self.entries = entries
        self.mode = mode
        self.team_weight = None if team_weight is None else np.asarray(team_weight, dtype=float)
        self.n_actions = entries[0].sf.n_actions
        self.last_choice: Optional[int] = None
        self.last_agreement: Optional[np.ndarray] = None

    def q_matrix(self, observation) -> np.ndarray:
        """(n_entries, n_actions) values the GPI maximum is taken over."""
        rows = []
        for e in self.entries:
            if self.mode == "with_dr":
                rows.append(dr_q(e, observation))
            else:
                w = self.team_weight if self.team_weight is not None else e.policy.task_weight
                rows.append(e.sf.psi(observation) @ w)
        return np.stack(rows)

    def select(self, observation) -> tuple[int, int, np.ndarray]:
        q = self.q_matrix(observation)
        flat = int(np.argmax(q))  # row-major: lowest (entry, action) wins ties
        entry, action = divmod(flat, q.shape[1])
        return action, entry, q

    def act(self, observation, rng=None) -> int:
        action, entry, q = self.select(observation)
        self.last_choice = entry
        # entries whose own greedy action coincides with the executed one
        self.last_agreement = np.argmax(q, axis=1) == action
        return action


def gpi_action(executor: GPIExecutor, observation) -> tuple[int, int]:
    action, entry, _ = executor.select(observation)
    return action, entry


@dataclass
class UsageStats:
    counts: np.ndarray
    agreement: np.ndarray = field(default=None)
    steps: int = 0

    @property
    def fractions(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else np.zeros_like(self.counts, dtype=float)

    @property
    def agreement_fractions(self) -> np.ndarray:
        if self.agreement is None or not self.steps:
            return np.zeros(len(self.counts))
        return self.agreement / self.steps

    @classmethod
    def from_logs(cls, logs: Sequence[EpisodeLog], n_entries: int) -> "UsageStats":
        counts = np.zeros(n_entries, dtype=np.int64)
        for log in logs:
            for i in log.chosen_library_index:
                if i is not None:
                    counts[i] += 1
        return cls(counts, None, int(counts.sum()))

    def merge(self, other: "UsageStats") -> "UsageStats":
        agree = None
        if self.agreement is not None and other.agreement is not None:
            agree = self.agreement + other.agreement
        return UsageStats(self.counts + other.counts, agree, self.steps + other.steps)


class _AgreementTracker:
    """Wraps an executor to accumulate the action-agreement statistic."""

    deterministic = True

    def __init__(self, executor: GPIExecutor):
        self.executor = executor
        self.n_actions = executor.n_actions
        self.agreement = np.zeros(len(executor.entries), dtype=np.int64)
        self.last_choice = None

    def act(self, observation, rng=None) -> int:
        a = self.executor.act(observation, rng)
        self.last_choice = self.executor.last_choice
        self.agreement += self.executor.last_agreement
        return a


def evaluate_zero_shot(executor: GPIExecutor, env, target_teammates, episodes: int,
                       rng: np.random.Generator, learner_slot: int = 0,
                       target_team_id: Optional[str] = None, gamma: Optional[float] = None,
                       record_snapshots: bool = False):
    """Execute the GPI policy with a (new) team; pure execution, nothing is written."""
    if target_team_id is not None and target_team_id in executor.library.source_team_ids:
        warnings.warn(f"target team {target_team_id!r} is also a source team; this is not zero-shot",
                      stacklevel=2)
    tracker = _AgreementTracker(executor)
    logs = []
    for _ in range(episodes):
        env.reset(rng)
        logs.append(rollout(env, tracker, target_teammates, rng, learner_slot=learner_slot,
                            record_obs=False, record_snapshots=record_snapshots,
                            team_id=target_team_id or ""))
    usage = UsageStats.from_logs(logs, len(executor.entries))
    usage.agreement = tracker.agreement
    return logs, usage


def _value_fn(source) -> Callable:
    if isinstance(source, GPIExecutor):
        return lambda obs: float(source.q_matrix(obs).max())
    if hasattr(source, "q"):
        return lambda obs: float(np.max(source.q(obs)))
    if callable(source):
        return lambda obs: float(np.max(source(obs)))
    raise ConfigError("value_map needs a GPI executor, an SF policy or a Q callable")


def value_map(source, env, base_state, agent_slot: int = 0, normalize: bool = True) -> np.ndarray:
    """Max-over-actions value with the learner placed on every free cell.

    Cells holding an object or prey are NaN.  With ``normalize`` the map is
    divided by its maximum whenever that maximum is positive.
    """
    value = _value_fn(source)
    g = env.config.grid_size
    out = np.full((g, g), np.nan)
    saved = env.state
    try:
        for r in range(g):
            for c in range(g):
                state = env.place_agent(base_state, agent_slot, (r, c))
                if state is None:
                    continue
                env.set_state(state)
                out[r, c] = value(env.observe(agent_slot))
    finally:
        env.state = saved
    if normalize:
        top = np.nanmax(out) if np.isfinite(out).any() else 0.0
        if top > 0:
            out = out / top
    return out


def value_map_pct_error(vmap: np.ndarray, reference: np.ndarray) -> float:
    """Mean absolute difference of two normalized maps over shared free cells, in percent."""
    mask = np.isfinite(vmap) & np.isfinite(reference)
    if not mask.any():
        return 0.0
    return float(100.0 * np.mean(np.abs(vmap[mask] - reference[mask])))
