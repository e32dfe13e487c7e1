"""Cooperative foraging gridworld.

Two agents collect three object types (red, orange, yellow).  Each type is
clustered in its own quadrant and the agents spawn in the lower-left one.
Features count objects collected per type in a transition; the team reward
is their dot product with ``team_weight``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import Observation, StepOutcome
from ..errors import ConfigError, InputError, StateError

# up, down, left, right, stay
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1], [0, 0]], dtype=np.int64)
ACTION_NAMES = ("up", "down", "left", "right", "stay")
TYPE_NAMES = ("red", "orange", "yellow")
N_CHANNELS = 5  # one per type, teammate, walls
TEAMMATE_CHANNEL = 3
WALL_CHANNEL = 4
_DR = MOVES[:, 0].tolist()
_DC = MOVES[:, 1].tolist()
_NO_CELLS = np.empty((0, 2), dtype=np.int64)


def quadrants(grid_size: int) -> dict:
    """Inclusive (r0, r1, c0, c1) boxes of the four quadrants."""
    h = grid_size // 2
    g = grid_size - 1
    return {
        "upper_left": (0, h - 1, 0, h - 1),
        "upper_right": (0, h - 1, h, g),
        "lower_right": (h, g, h, g),
        "lower_left": (h, g, 0, h - 1),
    }


# quadrant of each object type; the agents own the remaining one
TYPE_QUADRANTS = ("upper_left", "upper_right", "lower_right")


@dataclass
class ForagingConfig:
    grid_size: int = 8
    objects_per_type: int = 5
    n_types: int = 3
    horizon: int = 50
    team_weight: Sequence[float] = (1.0, 1.0, 1.0)
    spawn_quadrant: str = "lower_left"
    n_agents: int = 2
    # optional fixed layout: list of (type, row, col); overrides random spawns
    objects: Optional[list] = None
    agent_cells: Optional[list] = None

    def __post_init__(self):
        self.team_weight = np.asarray(self.team_weight, dtype=float)
        if self.grid_size < 4:
            raise ConfigError("grid_size must be at least 4")
        if self.objects_per_type < 1:
            raise ConfigError("objects_per_type must be at least 1")
        if self.n_types != 3:
            raise ConfigError("the foraging world has exactly 3 object types")
        if len(self.team_weight) != self.n_types:
            raise ConfigError("team_weight must have one entry per object type")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.spawn_quadrant not in quadrants(self.grid_size) or self.spawn_quadrant in TYPE_QUADRANTS:
            raise ConfigError(f"agents cannot spawn in quadrant {self.spawn_quadrant!r}")
        for name in TYPE_QUADRANTS:
            r0, r1, c0, c1 = quadrants(self.grid_size)[name]
            if (r1 - r0 + 1) * (c1 - c0 + 1) < self.objects_per_type:
                raise ConfigError(f"quadrant {name} is too small for {self.objects_per_type} objects")


@dataclass
class ForagingState:
    agent_positions: np.ndarray  # (n_agents, 2)
    object_grid: np.ndarray  # (G, G) int8, -1 = empty else type index
    step: int = 0
    terminal: bool = False
    initial_counts: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    _cells: Optional[list] = field(default=None, repr=False, compare=False)

    def copy(self) -> "ForagingState":
        return ForagingState(self.agent_positions.copy(), self.object_grid.copy(), self.step,
                             self.terminal, self.initial_counts)

    def remaining(self, n_types: int = 3) -> np.ndarray:
        return np.bincount(self.object_grid[self.object_grid >= 0], minlength=n_types)

    def object_cells(self, n_types: int = 3) -> list:
        """Absolute (row, col) cells of the remaining objects, per type."""
        if self._cells is None:
            rows, cols = np.nonzero(self.object_grid >= 0)
            kinds = self.object_grid[rows, cols]
            pts = np.empty((len(rows), 2), dtype=np.int64)
            pts[:, 0] = rows
            pts[:, 1] = cols
            self._cells = [pts[kinds == k] for k in range(n_types)]
        return self._cells


def reset(config: ForagingConfig, rng: np.random.Generator) -> ForagingState:
    g = config.grid_size
    grid = np.full((g, g), -1, dtype=np.int8)
    if config.objects is not None:
        for k, r, c in config.objects:
            grid[r, c] = k
    else:
        boxes = quadrants(g)
        for k, name in enumerate(TYPE_QUADRANTS):
            r0, r1, c0, c1 = boxes[name]
            w = c1 - c0 + 1
            cells = rng.choice((r1 - r0 + 1) * w, size=config.objects_per_type, replace=False)
            grid[r0 + cells // w, c0 + cells % w] = k
    if config.agent_cells is not None:
        pos = np.array(config.agent_cells, dtype=np.int64).reshape(config.n_agents, 2)
    else:
        r0, r1, c0, c1 = quadrants(g)[config.spawn_quadrant]
        pos = np.stack([rng.integers(r0, r1 + 1, size=config.n_agents),
                        rng.integers(c0, c1 + 1, size=config.n_agents)], axis=1).astype(np.int64)
    state = ForagingState(pos, grid, 0, not (grid >= 0).any())
    state.initial_counts = state.remaining(config.n_types)
    return state


def transition(state: ForagingState, joint_action, config: ForagingConfig):
    """Move every agent, then collect objects under them.

    Returns the new state, the per-type feature vector and per-agent credit.
    An object reached by several agents at once counts once; its credit is
    split evenly between them.
    """
    if state.terminal:
        raise StateError("transition called on a terminal state")
    acts = [int(a) for a in joint_action]
    if len(acts) != config.n_agents or not all(0 <= a < len(MOVES) for a in acts):
        raise InputError(f"invalid joint action {joint_action!r}")
    g = config.grid_size
    nxt = state.copy()
    pos = nxt.agent_positions
    grid = nxt.object_grid
    phi = np.zeros(config.n_types)
    credit = np.zeros((config.n_agents, config.n_types))
    cells = []
    for i, a in enumerate(acts):
        r = int(pos[i, 0]) + _DR[a]
        c = int(pos[i, 1]) + _DC[a]
        if 0 <= r < g and 0 <= c < g:
            pos[i, 0] = r
            pos[i, 1] = c
        else:
            r, c = int(pos[i, 0]), int(pos[i, 1])
        cells.append((r, c))
    collected = False
    for i, (r, c) in enumerate(cells):
        k = grid[r, c]
        if k >= 0:
            collected = True
            who = [j for j, cell in enumerate(cells) if cell == (r, c)]
            phi[k] += 1.0
            credit[who, k] += 1.0 / len(who)
            grid[r, c] = -1
    if not collected:
        nxt._cells = state._cells
    nxt.step = state.step + 1
    nxt.terminal = bool(nxt.step >= config.horizon or (collected and not (grid >= 0).any()))
    return nxt, phi, credit


def observe(state: ForagingState, agent_index: int, config: ForagingConfig) -> Observation:
    if not 0 <= agent_index < config.n_agents:
        raise InputError(f"agent index {agent_index} out of range")
    cells = list(state.object_cells(config.n_types))
    pos = state.agent_positions
    if config.n_agents == 2:
        cells.append(pos[1 - agent_index:2 - agent_index])
    else:
        others = np.delete(pos, agent_index, axis=0)
        cells.append(np.unique(others, axis=0))
    cells.append(_NO_CELLS)  # open grid: no walls
    return Observation(config.grid_size, (int(pos[agent_index, 0]), int(pos[agent_index, 1])), cells)


class ForagingEnv:
    kind = "foraging"
    supports_clone = True
    n_actions = len(MOVES)
    n_channels = N_CHANNELS

    def __init__(self, config: Optional[ForagingConfig] = None, **kwargs):
        self.config = config if config is not None else ForagingConfig(**kwargs)
        self.n_agents = self.config.n_agents
        self.feature_dim = self.config.n_types
        self.team_weight = self.config.team_weight
        self.horizon = self.config.horizon
        self.state: Optional[ForagingState] = None

    def reset(self, rng: np.random.Generator) -> ForagingState:
        self.state = reset(self.config, rng)
        return self.state

    def set_state(self, state: ForagingState) -> None:
        self.state = state.copy()

    def step(self, joint_action) -> StepOutcome:
        nxt, phi, credit = transition(self.state, joint_action, self.config)
        self.state = nxt
        truncated = nxt.terminal and bool((nxt.object_grid >= 0).any())
        return StepOutcome(nxt, float(phi @ self.team_weight), phi, nxt.terminal, truncated, credit)

    def observe(self, agent: int) -> Observation:
        return observe(self.state, agent, self.config)

    def clone(self) -> "ForagingEnv":
        other = copy.copy(self)
        other.state = self.state.copy() if self.state is not None else None
        return other

    def frozen_reward(self, state: ForagingState, joint_action, next_state: ForagingState) -> float:
        """Reward of the recorded s -> s' transition; the joint action cannot change it."""
        gone = (state.object_grid >= 0) & (next_state.object_grid < 0)
        phi = np.bincount(state.object_grid[gone], minlength=self.feature_dim).astype(float)
        return float(phi @ self.team_weight)

    def place_agent(self, state: ForagingState, agent: int, cell) -> Optional[ForagingState]:
        """Copy of ``state`` with one agent moved to ``cell``; None if an object sits there."""
        r, c = cell
        if state.object_grid[r, c] >= 0:
            return None
        out = state.copy()
        out.agent_positions[agent] = (r, c)
        return out

    def snapshot(self) -> dict:
        s = self.state
        rows, cols = np.nonzero(s.object_grid >= 0)
        return {
            "grid_size": self.config.grid_size,
            "step": s.step,
            "agents": s.agent_positions.tolist(),
            "objects": [[int(s.object_grid[r, c]), int(r), int(c)] for r, c in zip(rows, cols)],
        }

    def render_ascii(self) -> str:
        return render_ascii(self.snapshot())


def render_ascii(snap: dict) -> str:
    g = snap["grid_size"]
    rows = [["." for _ in range(g)] for _ in range(g)]
    for k, r, c in snap["objects"]:
        rows[r][c] = "ROY"[k]
    for i, (r, c) in enumerate(snap["agents"]):
        rows[r][c] = "L" if i == 0 else str(i)
    return "\n".join("".join(row) for row in rows)


def _step_towards(dr: int, dc: int) -> int:
    if dr < 0:
        return 0
    if dr > 0:
        return 1
    if dc < 0:
        return 2
    if dc > 0:
        return 3
    return 4


def _bfs(g: int, start: tuple, blocked: set) -> dict:
    """Shortest move counts from ``start`` over free cells of a g x g grid."""
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for r, c in frontier:
            d = dist[(r, c)] + 1
            for a in range(4):
                cell = (r + _DR[a], c + _DC[a])
                if 0 <= cell[0] < g and 0 <= cell[1] < g and cell not in dist and cell not in blocked:
                    dist[cell] = d
                    nxt.append(cell)
        frontier = nxt
    return dist


class ScriptedForager:
    """Greedy teammate heading for the nearest object it likes.

    Only object types with a strictly positive preference are targeted, and
    paths route around objects of the other types so the teammate never
    picks them up in passing.  Ties in path length are broken by (row, col,
    type index); among equally short first moves the action order
    up, down, left, right decides.  If every liked object is walled off by
    disliked ones the teammate falls back to plain Manhattan steps.
    """

    deterministic = True
    n_actions = len(MOVES)

    def __init__(self, preference, rng: Optional[np.random.Generator] = None):
        self.preference = np.asarray(preference, dtype=float)
        self.liked = [k for k, p in enumerate(self.preference) if p > 0]

    def act(self, observation: Observation, rng=None) -> int:
        if len(self.preference) != len(observation.cells) - 2:
            raise InputError("preference length does not match the number of object types")
        targets = [(r, c, k) for k in self.liked for r, c in observation.cells[k].tolist()]
        if not targets:
            return 4
        g = observation.grid_size
        here = tuple(observation.origin)
        blocked = {(r, c) for k in range(len(self.preference)) if k not in self.liked
                   for r, c in observation.cells[k].tolist()}
        dist = _bfs(g, here, blocked)
        reachable = [(dist[(r, c)], r, c, k) for r, c, k in targets if (r, c) in dist]
        if not reachable:
            best = min((abs(r - here[0]) + abs(c - here[1]), r, c, k) for r, c, k in targets)
            return _step_towards(best[1] - here[0], best[2] - here[1])
        d, r, c, _ = min(reachable)
        back = _bfs(g, (r, c), blocked)
        for a in range(4):
            cell = (here[0] + _DR[a], here[1] + _DC[a])
            if back.get(cell) == d - 1:
                return a
        return 4  # unreachable: d == 0 cannot happen while standing off the object


def scripted_teammate(preference, rng=None) -> ScriptedForager:
    return ScriptedForager(preference, rng)
