"""Ad hoc MMDP abstraction: environment contract, policies, rollouts, returns.

An environment used by this package is any object exposing

``n_agents``, ``n_actions``, ``feature_dim``, ``team_weight``, ``horizon``
    static description of the team problem;
``reset(rng) -> state`` / ``state`` / ``set_state(state)``
    episode initialisation and state access;
``step(joint_action) -> StepOutcome``
    one simultaneous transition of all agents;
``observe(agent) -> Observation``
    the agent-centric view handed to policies;
``clone() -> env``
    an independent copy, including the transition rng stream, so that
    counterfactual transitions replay the same stochastic draws;
``snapshot() -> dict``
    a JSON-serialisable picture of the current state, used for renders.

Policies expose ``act(observation, rng) -> int``, ``n_actions`` and
``deterministic``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import CapabilityError, ConfigError, InputError

LOG_SCHEMA = "v1"


class Policy(Protocol):
    n_actions: int
    deterministic: bool

    def act(self, observation: "Observation", rng: np.random.Generator) -> int: ...


@dataclass(frozen=True)
class AdHocTeamSpec:
    env_id: str
    learner_slot: int
    teammates: tuple
    gamma: float
    seed: int

    def __post_init__(self):
        from .envs import ENV_REGISTRY

        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.env_id not in ENV_REGISTRY:
            raise ConfigError(f"unknown environment {self.env_id!r}")


class Observation:
    """Agent-centric toroidal view of a grid world.

    ``cells[k]`` holds the absolute (row, col) coordinates of every set cell of
    channel ``k``; ``channels`` is the dense binary view translated so the
    observing agent sits at (0, 0).  ``origin`` is the observer's absolute cell,
    which disambiguates the wrapped view on a bounded grid.
    """

    __slots__ = ("grid_size", "origin", "cells", "_channels", "_key", "cache")

    def __init__(self, grid_size: int, origin: tuple[int, int], cells: Sequence[np.ndarray]):
        self.grid_size = grid_size
        self.origin = origin
        self.cells = cells
        self._channels = None
        self._key = None
        self.cache: dict = {}

    @property
    def n_channels(self) -> int:
        return len(self.cells)

    @property
    def channels(self) -> np.ndarray:
        if self._channels is None:
            g = self.grid_size
            out = np.zeros((len(self.cells), g, g), dtype=np.uint8)
            r0, c0 = self.origin
            for k, pts in enumerate(self.cells):
                if len(pts):
                    out[k, (pts[:, 0] - r0) % g, (pts[:, 1] - c0) % g] = 1
            self._channels = out
        return self._channels

    def offsets(self, k: int) -> np.ndarray:
        """Signed displacement from the observer to every set cell of channel k."""
        pts = self.cells[k]
        if not len(pts):
            return np.empty((0, 2), dtype=np.int64)
        return pts - np.asarray(self.origin)

    def key(self) -> bytes:
        if self._key is None:
            packed = np.packbits(self.channels).tobytes()
            self._key = packed + bytes((self.origin[0] & 0xFF, self.origin[1] & 0xFF))
        return self._key


@dataclass
class StepOutcome:
    next_state: Any
    reward: float
    features: np.ndarray
    terminal: bool
    truncated: bool = False
    # per-agent credit for each feature slot, shape (n_agents, d)
    agent_features: Optional[np.ndarray] = None


@dataclass
class Transition:
    obs_key: Optional[bytes]
    joint_action: tuple
    reward: float
    features: np.ndarray
    next_obs_key: Optional[bytes]
    terminal: bool
    truncated: bool = False
    agent_features: Optional[np.ndarray] = None


@dataclass
class EpisodeLog:
    transitions: list = field(default_factory=list)
    chosen_library_index: list = field(default_factory=list)
    seed: Optional[int] = None
    team_id: str = ""
    env_kind: str = ""
    learner_slot: int = 0
    snapshots: Optional[list] = None

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=float)

    @property
    def features(self) -> np.ndarray:
        if not self.transitions:
            return np.zeros((0, 0))
        return np.stack([t.features for t in self.transitions])

    @property
    def terminal(self) -> bool:
        return bool(self.transitions) and self.transitions[-1].terminal

    def to_lines(self) -> Iterable[str]:
        """One JSON record per transition (schema ``v1``)."""
        for t, tr in enumerate(self.transitions):
            rec = {
                "v": LOG_SCHEMA,
                "team": self.team_id,
                "env": self.env_kind,
                "seed": self.seed,
                "t": t,
                "obs": tr.obs_key.hex() if tr.obs_key is not None else None,
                "a": list(tr.joint_action),
                "r": tr.reward,
                "phi": [float(x) for x in tr.features],
                "next_obs": tr.next_obs_key.hex() if tr.next_obs_key is not None else None,
                "done": tr.terminal,
                "trunc": tr.truncated,
                "pi": self.chosen_library_index[t] if self.chosen_library_index else None,
            }
            if tr.agent_features is not None:
                rec["agent_phi"] = tr.agent_features.tolist()
            yield json.dumps(rec, sort_keys=True)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EpisodeLog":
        log = cls()
        for line in lines:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("v") != LOG_SCHEMA:
                raise InputError(f"unsupported episode log schema {rec.get('v')!r}")
            log.team_id, log.env_kind, log.seed = rec["team"], rec["env"], rec["seed"]
            agent_phi = rec.get("agent_phi")
            log.transitions.append(
                Transition(
                    bytes.fromhex(rec["obs"]) if rec["obs"] is not None else None,
                    tuple(rec["a"]),
                    rec["r"],
                    np.array(rec["phi"], dtype=float),
                    bytes.fromhex(rec["next_obs"]) if rec["next_obs"] is not None else None,
                    rec["done"],
                    rec["trunc"],
                    np.array(agent_phi, dtype=float) if agent_phi is not None else None,
                )
            )
            log.chosen_library_index.append(rec["pi"])
        if all(p is None for p in log.chosen_library_index):
            log.chosen_library_index = []
        return log


def write_logs(logs: Iterable[EpisodeLog], path) -> None:
    with open(path, "w") as fh:
        for log in logs:
            for line in log.to_lines():
                fh.write(line + "\n")


def read_logs(path) -> list[EpisodeLog]:
    """Split a record stream back into episodes (a new episode starts at t == 0)."""
    episodes, current = [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            if json.loads(line)["t"] == 0 and current:
                episodes.append(EpisodeLog.from_lines(current))
                current = []
            current.append(line)
    if current:
        episodes.append(EpisodeLog.from_lines(current))
    return episodes


def joint_with(others: Sequence[int], learner_action: int, learner_slot: int, n_agents: int) -> tuple:
    """Insert the learner's action into the teammates' actions (or overwrite its slot)."""
    others = list(others)
    if len(others) == n_agents:
        others[learner_slot] = learner_action
        return tuple(others)
    if len(others) != n_agents - 1:
        raise InputError(f"expected {n_agents - 1} teammate actions, got {len(others)}")
    others.insert(learner_slot, learner_action)
    return tuple(others)


def rollout(env, learner: Policy, teammates: Sequence[Policy], rng: np.random.Generator,
            horizon: Optional[int] = None, learner_slot: int = 0, record_obs: bool = True,
            record_snapshots: bool = False, team_id: str = "", seed: Optional[int] = None) -> EpisodeLog:
    """Run one episode from the environment's current (freshly reset) state.

    All agents observe s_t and commit actions before the single joint
    transition.  Stops at the first terminal step or after ``horizon`` steps.
    """
    if horizon is None:
        horizon = env.horizon
    if horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    if len(teammates) != env.n_agents - 1:
        raise ConfigError(f"environment has {env.n_agents} agents but {len(teammates)} teammates were given")

    agents = list(teammates)
    agents.insert(learner_slot, learner)
    log = EpisodeLog(team_id=team_id, seed=seed, env_kind=getattr(env, "kind", ""), learner_slot=learner_slot)
    if record_snapshots:
        log.snapshots = [env.snapshot()]
    track_choice = hasattr(learner, "last_choice")

    if getattr(env.state, "terminal", False):
        return log
    obs = [env.observe(i) for i in range(env.n_agents)]
    for _ in range(horizon):
        joint = tuple(int(p.act(o, rng)) for p, o in zip(agents, obs))
        if track_choice:
            log.chosen_library_index.append(learner.last_choice)
        out = env.step(joint)
        obs_next = [env.observe(i) for i in range(env.n_agents)]
        log.transitions.append(Transition(
            obs[learner_slot].key() if record_obs else None,
            joint,
            float(out.reward),
            out.features,
            obs_next[learner_slot].key() if record_obs else None,
            bool(out.terminal),
            bool(out.truncated),
            out.agent_features,
        ))
        if record_snapshots:
            log.snapshots.append(env.snapshot())
        if out.terminal:
            break
        obs = obs_next
    return log


def discounted_return(log, gamma: float) -> float:
    """Sum of gamma**t * r_t over an episode log (or a plain reward sequence)."""
    rewards = log.rewards if isinstance(log, EpisodeLog) else np.asarray(log, dtype=float)
    total = 0.0
    for r in rewards[::-1]:
        total = r + gamma * total
    return float(total)


def counterfactual_step_reward(env, state, others_actions: Sequence[int], learner_action: int,
                               learner_slot: int = 0) -> float:
    """Team reward had the learner played ``learner_action`` from ``state``.

    The transition is re-simulated on a clone of ``env`` (including its rng
    stream), so the caller's environment is left untouched.
    """
    if not getattr(env, "supports_clone", False):
        raise CapabilityError(f"{type(env).__name__} cannot clone its state")
    sim = env.clone()
    if state is not None:
        sim.set_state(state)
    joint = joint_with(others_actions, learner_action, learner_slot, env.n_agents)
    return float(sim.step(joint).reward)
