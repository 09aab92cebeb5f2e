"""The look-up table shared by the planning and the habit process.

Holds Laplace-smoothed transition counts, action values Q and state values V.
V is never learned on its own: every update that touches Q(s, .) resets
V(s) to max_a Q(s, a).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gridworld import ACTIONS, N_ACTIONS, GridWorld, true_transition_distribution


class ModelInconsistencyError(RuntimeError):
    """An observed successor lies outside the candidate envelope of (s, a)."""


@dataclass
class LookupTable:
    counts: np.ndarray  # (S, A, S) pseudo-counts
    probs: np.ndarray  # (S, A, S) counts normalised per row, kept in sync
    qvalues: np.ndarray  # (S, A)
    values: np.ndarray  # (S,)
    envelope: np.ndarray  # (S, S) bool, candidate successors of s
    terminal: np.ndarray  # (S,) bool
    discount: float
    learning_rate: float
    # search-tree sizes keyed by depth; valid while the model's support is unchanged
    tree_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def transition_probs(self, s: int, a: int) -> np.ndarray:
        return self.probs[s, a]

    def copy(self) -> LookupTable:
        return LookupTable(
            counts=self.counts.copy(), probs=self.probs.copy(),
            qvalues=self.qvalues.copy(), values=self.values.copy(),
            envelope=self.envelope.copy(), terminal=self.terminal.copy(),
            discount=self.discount, learning_rate=self.learning_rate,
        )

    def _renormalise(self, s: int, a: int) -> None:
        row = self.counts[s, a]
        self.probs[s, a] = row / row.sum()


def _check_params(discount: float, learning_rate: float) -> None:
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning_rate must lie in (0, 1], got {learning_rate}")


def _envelope(world: GridWorld) -> np.ndarray:
    n = world.n_states
    env = np.zeros((n, n), dtype=bool)
    for s in range(n):
        if world.is_free(s):
            env[s, world.neighbors(s)] = True
        else:
            env[s, s] = True
    return env


def init_table(world: GridWorld, discount: float = 0.9, learning_rate: float = 0.1) -> LookupTable:
    """Uniform transition model over each state's envelope, all values zero."""
    _check_params(discount, learning_rate)
    n = world.n_states
    env = _envelope(world)
    counts = np.repeat(env[:, None, :].astype(float), N_ACTIONS, axis=1)
    probs = counts / counts.sum(axis=2, keepdims=True)
    terminal = np.zeros(n, dtype=bool)
    terminal[world.goal_state] = True
    return LookupTable(
        counts=counts, probs=probs,
        qvalues=np.zeros((n, N_ACTIONS)), values=np.zeros(n),
        envelope=env, terminal=terminal,
        discount=float(discount), learning_rate=float(learning_rate),
    )


def perfect_table(world: GridWorld, discount: float = 0.9, learning_rate: float = 0.1) -> LookupTable:
    """Table whose transition model equals the true dynamics (no prior mass)."""
    t = init_table(world, discount, learning_rate)
    t.counts[:] = 0.0
    for s in world.free_states():
        for a in ACTIONS:
            for nxt, p in true_transition_distribution(world, s, a).items():
                t.counts[s, a, nxt] = p
    for s in range(world.n_states):
        if not world.is_free(s):
            t.counts[s, :, s] = 1.0
    t.probs[:] = t.counts / t.counts.sum(axis=2, keepdims=True)
    t.tree_cache.clear()
    return t


def update_transition(t: LookupTable, s: int, a: int, observed_next: int) -> LookupTable:
    if not t.envelope[s, observed_next]:
        raise ModelInconsistencyError(
            f"successor {observed_next} is not a candidate of state {s} under action {a}")
    if t.counts[s, a, observed_next] == 0.0:
        t.tree_cache.clear()
    t.counts[s, a, observed_next] += 1.0
    t._renormalise(s, a)
    return t


def bellman_backup(t: LookupTable, s: int, reward_fn) -> LookupTable:
    """Full expected backup of every action at ``s`` under the learned model.

    ``reward_fn`` is either a callable ``state -> reward`` or a reward vector
    indexed by successor state.
    """
    rewards = _as_reward_vector(reward_fn, t.n_states)
    succ_values = np.where(t.terminal, 0.0, t.values)
    t.qvalues[s] = t.probs[s] @ (rewards + t.discount * succ_values)
    t.values[s] = t.qvalues[s].max()
    return t


def td_update(t: LookupTable, s: int, a: int, reward: float, next_state: int) -> float:
    """One Q-learning update; returns the TD error before the update."""
    bootstrap = 0.0 if t.terminal[next_state] else t.qvalues[next_state].max()
    error = reward + t.discount * bootstrap - t.qvalues[s, a]
    t.qvalues[s, a] += t.learning_rate * error
    t.values[s] = t.qvalues[s].max()
    return float(error)


def _as_reward_vector(reward_fn, n: int) -> np.ndarray:
    if callable(reward_fn):
        return np.array([reward_fn(x) for x in range(n)], dtype=float)
    r = np.asarray(reward_fn, dtype=float)
    if r.shape != (n,):
        raise ValueError(f"reward vector has shape {r.shape}, expected ({n},)")
    return r


# -- snapshots ------------------------------------------------------------

_ACTION_KEYS = [a.name for a in ACTIONS]


def table_to_dict(t: LookupTable) -> dict:
    transitions = {}
    for s in range(t.n_states):
        per_action = {}
        for a in ACTIONS:
            row = t.counts[s, a]
            nz = np.flatnonzero(row)
            per_action[a.name] = {str(int(k)): float(row[k]) for k in nz}
        transitions[str(s)] = per_action
    return {
        "discount": t.discount,
        "learning_rate": t.learning_rate,
        "n_states": t.n_states,
        "terminal": [int(k) for k in np.flatnonzero(t.terminal)],
        "envelope": {str(s): [int(k) for k in np.flatnonzero(t.envelope[s])]
                     for s in range(t.n_states)},
        "values": {str(s): float(t.values[s]) for s in range(t.n_states)},
        "qvalues": {str(s): {name: float(t.qvalues[s, i]) for i, name in enumerate(_ACTION_KEYS)}
                    for s in range(t.n_states)},
        "transition_counts": transitions,
    }


def table_from_dict(d: dict) -> LookupTable:
    n = int(d["n_states"])
    counts = np.zeros((n, N_ACTIONS, n))
    for s, per_action in d["transition_counts"].items():
        for name, row in per_action.items():
            a = _ACTION_KEYS.index(name)
            for k, v in row.items():
                counts[int(s), a, int(k)] = v
    envelope = np.zeros((n, n), dtype=bool)
    for s, ks in d["envelope"].items():
        envelope[int(s), ks] = True
    terminal = np.zeros(n, dtype=bool)
    terminal[d["terminal"]] = True
    q = np.zeros((n, N_ACTIONS))
    for s, row in d["qvalues"].items():
        for name, v in row.items():
            q[int(s), _ACTION_KEYS.index(name)] = v
    values = np.zeros(n)
    for s, v in d["values"].items():
        values[int(s)] = v
    return LookupTable(
        counts=counts, probs=counts / counts.sum(axis=2, keepdims=True),
        qvalues=q, values=values, envelope=envelope, terminal=terminal,
        discount=float(d["discount"]), learning_rate=float(d["learning_rate"]),
    )


def dumps_table(t: LookupTable) -> str:
    return json.dumps(table_to_dict(t), indent=1, sort_keys=True) + "\n"


def loads_table(text: str) -> LookupTable:
    return table_from_dict(json.loads(text))
