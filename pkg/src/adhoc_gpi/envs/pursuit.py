"""Predator-prey gridworld.

Predators (the learner plus its teammates) move first; captures are then
resolved on the post-move positions; surviving prey finally random-walk
inside their regions.  An easy prey is caught by any predator on its cell, a
hard prey needs two predators on or orthogonally adjacent to its cell.  The
feature vector has one capture indicator per prey.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import Observation, StepOutcome
from ..errors import ConfigError, InputError, StateError
from .foraging import MOVES, _step_towards


def default_prey(grid_size: int) -> list:
    """Four prey in the corner boxes; easy prey on the main diagonal."""
    m = grid_size // 2
    g = grid_size - 1
    return [
        {"name": "top_left", "kind": "easy", "spawn": None, "region": (0, m - 1, 0, m - 1)},
        {"name": "top_right", "kind": "hard", "spawn": None, "region": (0, m - 1, m + 1, g)},
        {"name": "bottom_left", "kind": "hard", "spawn": None, "region": (m + 1, g, 0, m - 1)},
        {"name": "bottom_right", "kind": "easy", "spawn": None, "region": (m + 1, g, m + 1, g)},
    ]


@dataclass
class PursuitConfig:
    grid_size: int = 13
    n_predators: int = 3
    prey: Optional[list] = None
    horizon: int = 60
    team_weight: Optional[Sequence[float]] = None
    # inclusive box where predators spawn; defaults to the 3x3 centre block
    predator_region: Optional[tuple] = None
    predator_cells: Optional[list] = None

    def __post_init__(self):
        g = self.grid_size
        if g < 5:
            raise ConfigError("grid_size must be at least 5")
        if self.prey is None:
            self.prey = default_prey(g)
        self.prey = [dict(p) for p in self.prey]
        for p in self.prey:
            p.setdefault("name", "")
            p["region"] = tuple(int(x) for x in p["region"])
            r0, r1, c0, c1 = p["region"]
            if not (0 <= r0 <= r1 < g and 0 <= c0 <= c1 < g):
                raise ConfigError(f"prey region {p['region']} lies outside the grid")
            if p["kind"] not in ("easy", "hard"):
                raise ConfigError(f"unknown prey kind {p['kind']!r}")
            if p.get("spawn") is not None:
                r, c = p["spawn"]
                if not (r0 <= r <= r1 and c0 <= c <= c1):
                    raise ConfigError("prey spawn cell must lie in its region")
        if self.team_weight is None:
            self.team_weight = [1.0] * len(self.prey)
        self.team_weight = np.asarray(self.team_weight, dtype=float)
        if len(self.team_weight) != len(self.prey):
            raise ConfigError("team_weight needs one entry per prey")
        if self.predator_region is None:
            m = g // 2
            self.predator_region = (m - 1, m + 1, m - 1, m + 1)
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.n_predators < 2:
            raise ConfigError("at least two predators are needed")


@dataclass
class PursuitState:
    predator_positions: np.ndarray
    prey_positions: np.ndarray
    alive: np.ndarray
    step: int = 0
    terminal: bool = False

    def copy(self) -> "PursuitState":
        return PursuitState(self.predator_positions.copy(), self.prey_positions.copy(),
                            self.alive.copy(), self.step, self.terminal)


def reset(config: PursuitConfig, rng: np.random.Generator) -> PursuitState:
    n = config.n_predators
    if config.predator_cells is not None:
        pred = np.array(config.predator_cells, dtype=np.int64).reshape(n, 2)
    else:
        r0, r1, c0, c1 = config.predator_region
        pred = np.stack([rng.integers(r0, r1 + 1, size=n), rng.integers(c0, c1 + 1, size=n)], axis=1)
    prey = []
    for p in config.prey:
        if p.get("spawn") is not None:
            prey.append(tuple(p["spawn"]))
        else:
            r0, r1, c0, c1 = p["region"]
            prey.append((rng.integers(r0, r1 + 1), rng.integers(c0, c1 + 1)))
    return PursuitState(pred.astype(np.int64), np.array(prey, dtype=np.int64),
                        np.ones(len(prey), dtype=bool))


def transition(state: PursuitState, joint_action, config: PursuitConfig, rng: np.random.Generator):
    if state.terminal:
        raise StateError("transition called on a terminal state")
    acts = np.asarray(joint_action, dtype=np.int64)
    if acts.shape != (config.n_predators,) or (acts < 0).any() or (acts >= len(MOVES)).any():
        raise InputError(f"invalid joint action {joint_action!r}")
    g = config.grid_size
    nxt = state.copy()
    target = state.predator_positions + MOVES[acts]
    inside = ((target >= 0) & (target < g)).all(axis=1)
    nxt.predator_positions[inside] = target[inside]

    n_prey = len(config.prey)
    phi = np.zeros(n_prey)
    for k, p in enumerate(config.prey):
        if not nxt.alive[k]:
            continue
        dist = np.abs(nxt.predator_positions - nxt.prey_positions[k]).sum(axis=1)
        if p["kind"] == "easy":
            caught = (dist == 0).any()
        else:
            caught = (dist <= 1).sum() >= 2
        if caught:
            phi[k] = 1.0
            nxt.alive[k] = False

    # one draw per prey slot regardless of captures keeps the rng stream aligned
    draws = rng.integers(len(MOVES), size=n_prey)
    for k, p in enumerate(config.prey):
        if not nxt.alive[k]:
            continue
        r0, r1, c0, c1 = p["region"]
        r, c = nxt.prey_positions[k] + MOVES[draws[k]]
        if r0 <= r <= r1 and c0 <= c <= c1:
            nxt.prey_positions[k] = (r, c)
    nxt.step = state.step + 1
    nxt.terminal = bool(not nxt.alive.any() or nxt.step >= config.horizon)
    return nxt, phi


def observe(state: PursuitState, agent_index: int, config: PursuitConfig) -> Observation:
    if not 0 <= agent_index < config.n_predators:
        raise InputError(f"agent index {agent_index} out of range")
    empty = np.empty((0, 2), dtype=np.int64)
    cells = [state.prey_positions[k:k + 1] if state.alive[k] else empty for k in range(len(config.prey))]
    others = np.delete(state.predator_positions, agent_index, axis=0)
    cells.append(np.unique(others, axis=0))
    cells.append(empty)
    r, c = state.predator_positions[agent_index]
    return Observation(config.grid_size, (int(r), int(c)), cells)


class PursuitEnv:
    kind = "pursuit"
    supports_clone = True
    n_actions = len(MOVES)

    def __init__(self, config: Optional[PursuitConfig] = None, **kwargs):
        self.config = config if config is not None else PursuitConfig(**kwargs)
        self.n_agents = self.config.n_predators
        self.feature_dim = len(self.config.prey)
        self.n_channels = self.feature_dim + 2
        self.team_weight = self.config.team_weight
        self.horizon = self.config.horizon
        self.state: Optional[PursuitState] = None
        self._rng = np.random.default_rng(0)

    def reset(self, rng: np.random.Generator) -> PursuitState:
        self.state = reset(self.config, rng)
        self._rng = np.random.default_rng(rng.integers(2**63))
        return self.state

    def set_state(self, state: PursuitState) -> None:
        self.state = state.copy()

    def step(self, joint_action) -> StepOutcome:
        nxt, phi = transition(self.state, joint_action, self.config, self._rng)
        self.state = nxt
        truncated = nxt.terminal and bool(nxt.alive.any())
        return StepOutcome(nxt, float(phi @ self.team_weight), phi, nxt.terminal, truncated)

    def observe(self, agent: int) -> Observation:
        return observe(self.state, agent, self.config)

    def clone(self) -> "PursuitEnv":
        other = copy.copy(self)
        other.state = self.state.copy() if self.state is not None else None
        other._rng = copy.deepcopy(self._rng)
        return other

    def frozen_reward(self, state: PursuitState, joint_action, next_state: PursuitState) -> float:
        phi = (state.alive & ~next_state.alive).astype(float)
        return float(phi @ self.team_weight)

    def place_agent(self, state: PursuitState, agent: int, cell) -> Optional[PursuitState]:
        """Copy of ``state`` with one predator moved to ``cell``; None if a live prey sits there."""
        if any(state.alive[k] and tuple(state.prey_positions[k]) == tuple(cell)
               for k in range(len(state.alive))):
            return None
        out = state.copy()
        out.predator_positions[agent] = cell
        return out

    def snapshot(self) -> dict:
        s = self.state
        return {
            "grid_size": self.config.grid_size,
            "step": s.step,
            "agents": s.predator_positions.tolist(),
            "prey": [[int(k), int(r), int(c), self.config.prey[k]["kind"]]
                     for k, (r, c) in enumerate(s.prey_positions) if s.alive[k]],
        }

    def render_ascii(self) -> str:
        return render_ascii(self.snapshot())


def render_ascii(snap: dict) -> str:
    g = snap["grid_size"]
    rows = [["." for _ in range(g)] for _ in range(g)]
    for _, r, c, kind in snap["prey"]:
        rows[r][c] = "e" if kind == "easy" else "H"
    for i, (r, c) in enumerate(snap["agents"]):
        rows[r][c] = "L" if i == 0 else str(i)
    return "\n".join("".join(row) for row in rows)


class ScriptedPredator:
    """Greedy pursuer of the nearest alive prey in its preference set.

    Distance ties go to the lowest prey index.  Stays put once every preferred
    prey is gone (or when the preference set is empty).
    """

    deterministic = True
    n_actions = len(MOVES)

    def __init__(self, preferred_prey, rng: Optional[np.random.Generator] = None):
        self.preferred = sorted(int(k) for k in preferred_prey)

    def act(self, observation: Observation, rng=None) -> int:
        r0, c0 = observation.origin
        best = None
        for k in self.preferred:
            pts = observation.cells[k]
            if not len(pts):
                continue
            r, c = pts[0]
            cand = (abs(r - r0) + abs(c - c0), k, int(r), int(c))
            if best is None or cand < best:
                best = cand
        if best is None:
            return 4
        return _step_towards(best[2] - r0, best[3] - c0)


def scripted_predator(preferred_prey, rng=None) -> ScriptedPredator:
    return ScriptedPredator(preferred_prey, rng)
