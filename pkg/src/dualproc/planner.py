"""Depth-limited expectimax over the learned transition model.

The search tree branches over every action and every successor with nonzero
learned probability, stops at terminal states, and scores leaves with the
discounted table value V(leaf). Values of identical subtrees are identical,
so they are computed level by level over all states at once; the reported
``nodes_expanded`` is still the size of the full tree (every internal node
counted, repeated states included), which is what the harness charges as
response time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import Action, GridWorld, step
from .table import LookupTable, bellman_backup, update_transition

DEFAULT_DEPTH = 4
DEFAULT_NODE_BUDGET = 10**6
TIE_TOL = 1e-12


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanResult:
    chosen_action: Action
    expected_return: float
    nodes_expanded: int
    depth_used: int
    root_values: tuple[float, ...]


def argmax_random(values: np.ndarray, rng: np.random.Generator) -> int:
    """Index of a maximal entry, ties broken uniformly with ``rng``."""
    values = np.asarray(values, dtype=float)
    best = np.flatnonzero(values >= values.max() - TIE_TOL)
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def tree_size(t: LookupTable, s: int, depth: int, budget: int = DEFAULT_NODE_BUDGET) -> int:
    """Internal nodes of the depth-limited search tree rooted at ``s``.

    Raises :class:`BudgetExceededError` when the count exceeds ``budget``.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    key = (depth, budget)
    counts = t.tree_cache.get(key)
    if counts is None:
        # branch[x, y]: number of (action, successor=y) edges out of x that get expanded
        branch = (t.probs > 0).sum(axis=1).astype(np.int64)
        branch[:, t.terminal] = 0
        cap = budget + 1
        counts = np.ones(t.n_states, dtype=np.int64)
        for _ in range(depth - 1):
            # clipping keeps int64 safe; counts are monotone so "> budget" survives
            counts = np.minimum(1 + branch @ counts, cap)
        t.tree_cache[key] = counts
    n = int(counts[s])
    if n > budget:
        raise BudgetExceededError(
            f"search from state {s} at depth {depth} needs more than {budget} expansions")
    return n


def root_action_values(t: LookupTable, s: int, depth: int, rewards: np.ndarray) -> np.ndarray:
    """Expectimax estimate of each root action's return, depth ``depth``."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    gamma = t.discount
    live = ~t.terminal
    w = np.where(live, t.values, 0.0)
    for _ in range(depth - 1):
        q = t.probs @ (rewards + gamma * w)
        w = np.where(live, q.max(axis=1), 0.0)
    return t.probs[s] @ (rewards + gamma * w)


def dls_plan(t: LookupTable, world: GridWorld, s: int, depth: int,
             tie_rng: np.random.Generator, node_budget: int = DEFAULT_NODE_BUDGET) -> PlanResult:
    world.check_state(s)
    nodes = tree_size(t, s, depth, node_budget)
    q = root_action_values(t, s, depth, world.reward_vector())
    a = argmax_random(q, tie_rng)
    return PlanResult(
        chosen_action=Action(a),
        expected_return=float(q[a]),
        nodes_expanded=nodes,
        depth_used=depth,
        root_values=tuple(float(x) for x in q),
    )


@dataclass(frozen=True)
class MBStep:
    action: Action
    next_state: int
    reward: float
    done: bool
    plan: PlanResult
    prediction_error: float  # 1 - P_model(observed successor), before the update


def mb_step(t: LookupTable, world: GridWorld, s: int, depth: int, rng: np.random.Generator,
            node_budget: int = DEFAULT_NODE_BUDGET) -> MBStep:
    """Plan, act, then update transitions and back up the values of ``s``."""
    plan = dls_plan(t, world, s, depth, rng, node_budget)
    return execute_mb_update(t, world, s, plan.chosen_action, rng, plan)


def execute_mb_update(t: LookupTable, world: GridWorld, s: int, a: Action,
                      rng: np.random.Generator, plan: PlanResult) -> MBStep:
    nxt, reward, done = step(world, s, a, rng)
    pred_err = 1.0 - float(t.probs[s, a, nxt])
    update_transition(t, s, a, nxt)
    bellman_backup(t, s, world.reward_vector())
    return MBStep(action=Action(a), next_state=nxt, reward=reward, done=done,
                  plan=plan, prediction_error=pred_err)
