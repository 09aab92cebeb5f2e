"""Model-free process: epsilon-greedy action selection on Q plus a TD update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import N_ACTIONS, Action, GridWorld, step
from .planner import argmax_random
from .table import LookupTable, td_update


@dataclass(frozen=True)
class ExplorationPolicy:
    """Per-trial epsilon schedule: ``max(floor, epsilon * decay**(trial - 1))``.

    ``epsilon=0`` gives the purely greedy selector.
    """

    epsilon: float = 0.1
    epsilon_decay: float = 0.995
    floor: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")
        if not 0.0 <= self.floor <= 1.0:
            raise ValueError(f"epsilon floor must lie in [0, 1], got {self.floor}")

    def epsilon_at(self, trial: int) -> float:
        if self.epsilon == 0.0:
            return 0.0
        return max(self.floor, self.epsilon * self.epsilon_decay ** (trial - 1))


GREEDY = ExplorationPolicy(epsilon=0.0)


def greedy_action(t: LookupTable, s: int, rng: np.random.Generator) -> Action:
    return Action(argmax_random(t.qvalues[s], rng))


def select_action(t: LookupTable, s: int, epsilon: float, rng: np.random.Generator) -> Action:
    if epsilon > 0.0 and rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    return greedy_action(t, s, rng)


@dataclass(frozen=True)
class MFStep:
    action: Action
    next_state: int
    reward: float
    done: bool
    td_error: float


def mf_step(t: LookupTable, world: GridWorld, s: int, policy: ExplorationPolicy,
            rng: np.random.Generator, trial: int = 1) -> MFStep:
    """Act from Q and apply one TD update. Transition counts are left alone."""
    a = select_action(t, s, policy.epsilon_at(trial), rng)
    return execute_mf_update(t, world, s, a, rng)


def execute_mf_update(t: LookupTable, world: GridWorld, s: int, a: Action,
                      rng: np.random.Generator) -> MFStep:
    nxt, reward, done = step(world, s, a, rng)
    err = td_update(t, s, a, reward, nxt)
    return MFStep(action=Action(a), next_state=nxt, reward=reward, done=done, td_error=err)


def greedy_policy_rollout(t: LookupTable, world: GridWorld, max_steps: int = 10_000) -> int | None:
    """Steps the first-index greedy policy needs from start to goal.

    Returns ``None`` if the goal is not reached within ``max_steps``.
    Intended for deterministic worlds; no random source is consumed.
    """
    s = world.start_state
    goal = world.goal_state
    if s == goal:
        return 0
    for n in range(1, max_steps + 1):
        a = Action(int(np.argmax(t.qvalues[s])))
        s = world.move(s, a)
        if s == goal:
            return n
    return None
