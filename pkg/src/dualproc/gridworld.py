"""Grid-world task environment.

Cells are addressed as ``(row, col)`` with row 0 at the top. States are the
row-major index ``row * width + col``. Moves that would leave the grid or
enter a wall leave the agent where it is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from enum import IntEnum
from pathlib import Path

import numpy as np

Cell = tuple[int, int]


class InvalidStateError(ValueError):
    """Raised when a state is out of bounds or a wall."""


class UnreachableGoalError(RuntimeError):
    pass


class Action(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


ACTIONS = tuple(Action)
N_ACTIONS = len(ACTIONS)

_DELTAS = {
    Action.NORTH: (-1, 0),
    Action.EAST: (0, 1),
    Action.SOUTH: (1, 0),
    Action.WEST: (0, -1),
}

# lateral slips for each intended direction
_LATERAL = {
    Action.NORTH: (Action.WEST, Action.EAST),
    Action.SOUTH: (Action.EAST, Action.WEST),
    Action.EAST: (Action.NORTH, Action.SOUTH),
    Action.WEST: (Action.SOUTH, Action.NORTH),
}


@dataclass(frozen=True)
class GridWorld:
    width: int = 10
    height: int = 10
    walls: frozenset[Cell] = field(default_factory=frozenset)
    start: Cell = (0, 0)
    goal: Cell = (9, 9)
    goal_reward: float = 1.0
    step_reward: float = 0.0
    slip_prob: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ValueError(f"slip_prob must lie in [0, 1], got {self.slip_prob}")
        object.__setattr__(self, "walls", frozenset(tuple(w) for w in self.walls))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        for name in ("start", "goal"):
            cell = getattr(self, name)
            if not self.in_bounds(cell) or cell in self.walls:
                raise ValueError(f"{name} {cell} is out of bounds or a wall")

    # -- addressing -------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def start_state(self) -> int:
        return self.state_of(self.start)

    @property
    def goal_state(self) -> int:
        return self.state_of(self.goal)

    @property
    def deterministic(self) -> bool:
        return self.slip_prob == 0.0

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def state_of(self, cell: Cell) -> int:
        if not self.in_bounds(cell):
            raise InvalidStateError(f"cell {cell} is out of bounds")
        return cell[0] * self.width + cell[1]

    def cell_of(self, s: int) -> Cell:
        if not 0 <= s < self.n_states:
            raise InvalidStateError(f"state {s} is out of range")
        return divmod(int(s), self.width)

    def is_free(self, s: int) -> bool:
        return self.cell_of(s) not in self.walls

    def free_states(self) -> list[int]:
        return [s for s in range(self.n_states) if self.cell_of(s) not in self.walls]

    def check_state(self, s: int) -> None:
        cell = self.cell_of(s)
        if cell in self.walls:
            raise InvalidStateError(f"state {s} {cell} is a wall")

    # -- dynamics ---------------------------------------------------------

    def move(self, s: int, a: Action) -> int:
        """Deterministic result of attempting ``a`` from ``s``."""
        r, c = self.cell_of(s)
        dr, dc = _DELTAS[Action(a)]
        target = (r + dr, c + dc)
        if not self.in_bounds(target) or target in self.walls:
            return s
        return self.state_of(target)

    def neighbors(self, s: int) -> list[int]:
        """Distinct successors reachable by some action, including ``s`` itself."""
        out = {s}
        for a in ACTIONS:
            out.add(self.move(s, a))
        return sorted(out)

    def reward(self, s_next: int) -> float:
        return self.goal_reward if s_next == self.goal_state else self.step_reward

    @cached_property
    def _rewards(self) -> np.ndarray:
        r = np.full(self.n_states, self.step_reward, dtype=float)
        r[self.goal_state] = self.goal_reward
        r.setflags(write=False)
        return r

    def reward_vector(self) -> np.ndarray:
        return self._rewards

    def is_connected(self) -> bool:
        """True if every free cell has a free neighbour (no isolated states)."""
        free = self.free_states()
        if len(free) == 1:
            return True
        return all(len(self.neighbors(s)) > 1 for s in free)


def step(world: GridWorld, s: int, a: Action, rng: np.random.Generator) -> tuple[int, float, bool]:
    world.check_state(s)
    a = Action(a)
    if world.slip_prob > 0.0:
        u = rng.random()
        if u < world.slip_prob:
            left, right = _LATERAL[a]
            a = left if u < world.slip_prob / 2 else right
    nxt = world.move(s, a)
    return nxt, world.reward(nxt), nxt == world.goal_state


def true_transition_distribution(world: GridWorld, s: int, a: Action) -> dict[int, float]:
    world.check_state(s)
    a = Action(a)
    dist: dict[int, float] = {}

    def add(target: int, p: float) -> None:
        if p > 0.0:
            dist[target] = dist.get(target, 0.0) + p

    add(world.move(s, a), 1.0 - world.slip_prob)
    for lateral in _LATERAL[a]:
        add(world.move(s, lateral), world.slip_prob / 2)
    return dist


def transition_matrix(world: GridWorld) -> np.ndarray:
    """Dense ``(S, A, S)`` array of true transition probabilities.

    Wall rows are self-loops so the array stays stochastic.
    """
    n = world.n_states
    P = np.zeros((n, N_ACTIONS, n))
    for s in range(n):
        for a in ACTIONS:
            if world.is_free(s):
                for nxt, p in true_transition_distribution(world, s, a).items():
                    P[s, a, nxt] = p
            else:
                P[s, a, s] = 1.0
    return P


def parse_map(text: str, **kwargs) -> GridWorld:
    """Build a world from a text layout.

    ``.`` free, ``#`` wall, ``S`` start, ``G`` goal. Extra keyword arguments
    (rewards, slip_prob) are passed to :class:`GridWorld`.
    """
    rows = [line.rstrip("\r") for line in text.splitlines()]
    rows = [r for r in rows if r.strip()]
    if not rows:
        raise ValueError("map is empty")
    width = len(rows[0])
    walls, starts, goals = set(), [], []
    for r, line in enumerate(rows):
        if len(line) != width:
            raise ValueError(f"map row {r} has length {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch == "#":
                walls.add((r, c))
            elif ch == "S":
                starts.append((r, c))
            elif ch == "G":
                goals.append((r, c))
            elif ch != ".":
                raise ValueError(f"unknown map character {ch!r} at row {r}, col {c}")
    if len(starts) != 1 or len(goals) != 1:
        raise ValueError(f"map needs exactly one S and one G (found {len(starts)} S, {len(goals)} G)")
    return GridWorld(width=width, height=len(rows), walls=frozenset(walls),
                     start=starts[0], goal=goals[0], **kwargs)


def load_map(path: str | Path, **kwargs) -> GridWorld:
    return parse_map(Path(path).read_text(), **kwargs)


def render_map(world: GridWorld) -> str:
    lines = []
    for r in range(world.height):
        chars = []
        for c in range(world.width):
            cell = (r, c)
            if cell == world.start:
                chars.append("S")
            elif cell == world.goal:
                chars.append("G")
            elif cell in world.walls:
                chars.append("#")
            else:
                chars.append(".")
        lines.append("".join(chars))
    return "\n".join(lines) + "\n"
