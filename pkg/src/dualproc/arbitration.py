"""Step-level arbitration between the planning (MB) and habit (MF) process."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gridworld import N_ACTIONS, Action, GridWorld
from .learner import ExplorationPolicy, execute_mf_update, mf_step
from .planner import (DEFAULT_DEPTH, DEFAULT_NODE_BUDGET, PlanResult, argmax_random,
                      execute_mb_update, mb_step, root_action_values, tree_size)
from .table import LookupTable


class Mode(str, Enum):
    MB = "MB"
    MF = "MF"


class ControllerKind(str, Enum):
    PURE_MB = "pure-mb"
    PURE_MF = "pure-mf"
    INTERLEAVED = "dual"
    WEIGHTED = "weighted"
    UNCERTAINTY = "uncertainty"


KIND_ALIASES = {
    "mb": ControllerKind.PURE_MB,
    "pure-mb": ControllerKind.PURE_MB,
    "mf": ControllerKind.PURE_MF,
    "pure-mf": ControllerKind.PURE_MF,
    "dual": ControllerKind.INTERLEAVED,
    "interleaved": ControllerKind.INTERLEAVED,
    "weighted": ControllerKind.WEIGHTED,
    "uncertainty": ControllerKind.UNCERTAINTY,
}


def parse_kind(name: str | ControllerKind) -> ControllerKind:
    if isinstance(name, ControllerKind):
        return name
    try:
        return KIND_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown controller {name!r}; choose from {sorted(KIND_ALIASES)}") from None


@dataclass(frozen=True)
class LinearHandoff:
    """w_MB(i) = max(0, 1 - i / trials)."""

    trials: float = 50.0

    def __call__(self, i: int) -> float:
        return max(0.0, 1.0 - i / self.trials)


@dataclass(frozen=True)
class ConstantWeight:
    weight: float

    def __call__(self, i: int) -> float:
        return self.weight


@dataclass(frozen=True)
class ControllerSpec:
    kind: ControllerKind = ControllerKind.INTERLEAVED
    factor: int = 5
    chunk_size: int = 4
    weight_schedule: object = field(default_factory=LinearHandoff)
    reliability_smoothing: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0.0 < self.reliability_smoothing <= 1.0:
            raise ValueError("reliability_smoothing must lie in (0, 1]")
        if not callable(self.weight_schedule):
            raise TypeError("weight_schedule must be callable: trial index -> w_MB")


# -- mode rules ------------------------------------------------------------

def select_mode_interleaved(i: int, j: int, factor: int, chunk_size: int) -> Mode:
    """Model-based iff ``j % (i // factor) == 0 or j % chunk_size == 0``.

    While ``i // factor <= 1`` every step is model-based; this also covers the
    modulo-by-zero of the earliest trials.
    """
    k = i // factor
    if k <= 1:
        return Mode.MB
    if j % k == 0 or j % chunk_size == 0:
        return Mode.MB
    return Mode.MF


def interleaved_schedule(i: int, length: int, factor: int, chunk_size: int) -> list[Mode]:
    return [select_mode_interleaved(i, j, factor, chunk_size) for j in range(length)]


@dataclass(frozen=True)
class WeightedChoice:
    action: Action
    mode: Mode
    weight: float
    blend: tuple[float, ...]
    nodes_expanded: int


def select_mode_weighted(t: LookupTable, world: GridWorld, s: int, i: int, weight_schedule,
                         depth: int, tie_rng: np.random.Generator,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> WeightedChoice:
    """Argmax of ``w * Q_MB + (1 - w) * Q`` where Q_MB is the planner's root estimate."""
    w = float(weight_schedule(i))
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"weight schedule returned {w} for trial {i}")
    nodes = tree_size(t, s, depth, node_budget)
    q_mb = root_action_values(t, s, depth, world.reward_vector())
    blend = w * q_mb + (1.0 - w) * t.qvalues[s]
    a = argmax_random(blend, tie_rng)
    return WeightedChoice(action=Action(a), mode=Mode.MB if w >= 0.5 else Mode.MF,
                          weight=w, blend=tuple(float(x) for x in blend), nodes_expanded=nodes)


class UncertaintyTracker:
    """Exponentially smoothed absolute prediction error of each process.

    Both estimates start at 0, so an empty history is a tie and goes to MB.
    """

    def __init__(self, smoothing: float = 0.1):
        self.smoothing = smoothing
        self.mb_error = 0.0
        self.mf_error = 0.0

    def record(self, mb_error: float, mf_error: float) -> None:
        b = self.smoothing
        self.mb_error = (1.0 - b) * self.mb_error + b * abs(mb_error)
        self.mf_error = (1.0 - b) * self.mf_error + b * abs(mf_error)


def select_mode_uncertainty(tracker: UncertaintyTracker) -> Mode:
    return Mode.MF if tracker.mf_error < tracker.mb_error else Mode.MB


# -- controllers -----------------------------------------------------------

@dataclass(frozen=True)
class ControllerStep:
    action: Action
    next_state: int
    reward: float
    done: bool
    mode: Mode
    cost: int


class Controller:
    """Runs one step at a time under a :class:`ControllerSpec`.

    One instance per seed; the uncertainty rule keeps its error history here
    across trials.
    """

    def __init__(self, spec: ControllerSpec, depth: int = DEFAULT_DEPTH,
                 policy: ExplorationPolicy | None = None,
                 node_budget: int = DEFAULT_NODE_BUDGET):
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.spec = spec
        self.depth = depth
        self.policy = policy if policy is not None else ExplorationPolicy()
        self.node_budget = node_budget
        self.tracker = UncertaintyTracker(spec.reliability_smoothing)

    def step(self, t: LookupTable, world: GridWorld, s: int, i: int, j: int,
             rng: np.random.Generator) -> ControllerStep:
        kind = self.spec.kind
        if kind is ControllerKind.WEIGHTED:
            return self._weighted_step(t, world, s, i, rng)
        if kind is ControllerKind.PURE_MB:
            mode = Mode.MB
        elif kind is ControllerKind.PURE_MF:
            mode = Mode.MF
        elif kind is ControllerKind.INTERLEAVED:
            mode = select_mode_interleaved(i, j, self.spec.factor, self.spec.chunk_size)
        else:
            mode = select_mode_uncertainty(self.tracker)

        q_before = t.qvalues[s].copy()
        if mode is Mode.MB:
            out = mb_step(t, world, s, self.depth, rng, self.node_budget)
            cost = out.plan.nodes_expanded
        else:
            out = mf_step(t, world, s, self.policy, rng, trial=i)
            cost = 1
        if kind is ControllerKind.UNCERTAINTY:
            self._record_errors(t, s, out, mode, q_before)
        return ControllerStep(action=out.action, next_state=out.next_state, reward=out.reward,
                              done=out.done, mode=mode, cost=cost)

    def _record_errors(self, t, s, out, mode, q_before) -> None:
        if mode is Mode.MB:
            mb_err = out.prediction_error
            bootstrap = 0.0 if t.terminal[out.next_state] else t.qvalues[out.next_state].max()
            mf_err = out.reward + t.discount * bootstrap - q_before[out.action]
        else:
            mf_err = out.td_error
            mb_err = 1.0 - float(t.probs[s, out.action, out.next_state])
        self.tracker.record(mb_err, mf_err)

    def _weighted_step(self, t, world, s, i, rng) -> ControllerStep:
        choice = select_mode_weighted(t, world, s, i, self.spec.weight_schedule,
                                      self.depth, rng, self.node_budget)
        a = choice.action
        if choice.mode is Mode.MF:
            eps = self.policy.epsilon_at(i)
            if eps > 0.0 and rng.random() < eps:
                a = Action(int(rng.integers(N_ACTIONS)))
            out = execute_mf_update(t, world, s, a, rng)
        else:
            plan = PlanResult(chosen_action=a, expected_return=choice.blend[a],
                              nodes_expanded=choice.nodes_expanded, depth_used=self.depth,
                              root_values=choice.blend)
            out = execute_mb_update(t, world, s, a, rng, plan)
        return ControllerStep(action=out.action, next_state=out.next_state, reward=out.reward,
                              done=out.done, mode=choice.mode, cost=choice.nodes_expanded)


def run_controller_step(controller: Controller, t: LookupTable, world: GridWorld, s: int,
                        i: int, j: int, rng: np.random.Generator) -> ControllerStep:
    return controller.step(t, world, s, i, j, rng)

