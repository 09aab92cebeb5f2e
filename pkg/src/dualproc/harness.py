"""Trial and experiment runner, response-time cost model, and oracles.

Response time is simulated effort: a model-free step costs 1 unit and a
model-based step costs the number of search-tree nodes it expanded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .arbitration import Controller, ControllerKind, ControllerSpec, Mode
from .gridworld import ACTIONS, GridWorld, UnreachableGoalError, transition_matrix
from .learner import ExplorationPolicy
from .planner import DEFAULT_DEPTH, DEFAULT_NODE_BUDGET
from .table import LookupTable, init_table

DEFAULT_MAX_STEPS = 10_000


@dataclass(frozen=True)
class ExperimentParams:
    discount: float = 0.9
    learning_rate: float = 0.1
    depth: int = DEFAULT_DEPTH
    epsilon: float = 0.1
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.01
    max_steps: int = DEFAULT_MAX_STEPS
    node_budget: int = DEFAULT_NODE_BUDGET

    @property
    def policy(self) -> ExplorationPolicy:
        return ExplorationPolicy(self.epsilon, self.epsilon_decay, self.epsilon_floor)


@dataclass
class TrialRecord:
    trial_index: int
    steps: int
    simulated_time: int
    mode_tags: list[str]
    step_costs: list[int]
    truncated: bool
    wall_time: float = field(default=0.0, compare=False)

    @property
    def mean_response_time(self) -> float:
        return self.simulated_time / self.steps if self.steps else 0.0

    @property
    def mb_fraction(self) -> float:
        return self.mode_tags.count(Mode.MB.value) / self.steps if self.steps else 0.0

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "steps": self.steps,
            "simulated_time": self.simulated_time,
            "mean_response_time": self.mean_response_time,
            "mb_fraction": self.mb_fraction,
            "truncated": self.truncated,
            "mode_tags": "".join("B" if m == Mode.MB.value else "F" for m in self.mode_tags),
            "step_costs": self.step_costs,
        }


def run_trial(controller: Controller, world: GridWorld, table: LookupTable, i: int,
              rng: np.random.Generator, max_steps: int = DEFAULT_MAX_STEPS) -> TrialRecord:
    """One episode from start until the goal or ``max_steps`` transitions."""
    if i < 1:
        raise ValueError(f"trial index must be >= 1, got {i}")
    t0 = time.perf_counter()
    s = world.start_state
    tags: list[str] = []
    costs: list[int] = []
    done = s == world.goal_state
    while not done and len(tags) < max_steps:
        out = controller.step(table, world, s, i, len(tags), rng)
        tags.append(out.mode.value)
        costs.append(out.cost)
        s, done = out.next_state, out.done
    return TrialRecord(
        trial_index=i, steps=len(tags), simulated_time=int(sum(costs)),
        mode_tags=tags, step_costs=costs, truncated=not done,
        wall_time=time.perf_counter() - t0,
    )


def _run_seed(args) -> tuple[list[TrialRecord], LookupTable]:
    spec, world, trials, seed, params = args
    rng = np.random.default_rng(seed)
    table = init_table(world, params.discount, params.learning_rate)
    controller = Controller(spec, depth=params.depth, policy=params.policy,
                            node_budget=params.node_budget)
    records = [run_trial(controller, world, table, i, rng, params.max_steps)
               for i in range(1, trials + 1)]
    return records, table


def run_seed(spec: ControllerSpec, world: GridWorld, trials: int, seed: int,
             params: ExperimentParams = ExperimentParams()) -> tuple[list[TrialRecord], LookupTable]:
    """All trials for one seed; returns the records and the final table."""
    return _run_seed((spec, world, trials, seed, params))


@dataclass
class ExperimentResult:
    fingerprint: str
    per_seed: dict[int, list[TrialRecord]]
    config: dict
    summary: dict = field(default_factory=dict)
    tables: dict[int, LookupTable] = field(default_factory=dict, repr=False, compare=False)

    @property
    def seeds(self) -> list[int]:
        return list(self.per_seed)

    @property
    def trials(self) -> int:
        return len(next(iter(self.per_seed.values())))

    def matrix(self, metric: str) -> np.ndarray:
        """``(n_seeds, n_trials)`` array of a per-trial metric."""
        return np.array([[getattr(r, metric) for r in recs] for recs in self.per_seed.values()],
                        dtype=float)


def describe_world(world: GridWorld) -> dict:
    return {
        "width": world.width, "height": world.height,
        "walls": sorted([list(w) for w in world.walls]),
        "start": list(world.start), "goal": list(world.goal),
        "goal_reward": world.goal_reward, "step_reward": world.step_reward,
        "slip_prob": world.slip_prob,
    }


def describe_spec(spec: ControllerSpec) -> dict:
    sched = spec.weight_schedule
    sched_desc = ({"type": type(sched).__name__, **asdict(sched)}
                  if hasattr(sched, "__dataclass_fields__") else {"type": repr(sched)})
    return {
        "kind": spec.kind.value, "factor": spec.factor, "chunk_size": spec.chunk_size,
        "weight_schedule": sched_desc, "reliability_smoothing": spec.reliability_smoothing,
    }


def experiment_metadata(spec: ControllerSpec, params: ExperimentParams) -> dict:
    notes = []
    uses_mf = spec.kind is not ControllerKind.PURE_MB
    if uses_mf and params.epsilon > 0:
        notes.append("model-free steps use epsilon-greedy exploration "
                     "(the literal dual-process rule is greedy-only)")
    elif uses_mf:
        notes.append("model-free steps are purely greedy (literal rule)")
    if spec.kind is ControllerKind.UNCERTAINTY:
        notes.append("uncertainty arbitration is a simplified stand-in: exponentially "
                     "smoothed prediction errors, not Bayesian inference")
    if spec.kind is ControllerKind.WEIGHTED:
        notes.append("weighted controller runs the planner every step and is charged for it")
    notes.append("response time is simulated effort: MF step = 1, MB step = nodes expanded")
    return {"notes": notes}


def fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def run_experiment(spec: ControllerSpec, world: GridWorld, trials: int, seeds: list[int],
                   params: ExperimentParams = ExperimentParams(), workers: int = 1) -> ExperimentResult:
    """Fresh table per seed, ``trials`` sequential trials sharing that table.

    With ``workers > 1`` seeds run in separate processes; results are
    identical to the sequential run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must be non-empty")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    jobs = [(spec, world, trials, seed, params) for seed in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_seed, jobs))
    else:
        outputs = [_run_seed(job) for job in jobs]
    config = {
        "controller": describe_spec(spec),
        "world": describe_world(world),
        "params": asdict(params),
        "trials": trials,
        "seeds": seeds,
    }
    result = ExperimentResult(
        fingerprint=fingerprint(config),
        per_seed={seed: recs for seed, (recs, _) in zip(seeds, outputs)},
        config={**config, "metadata": experiment_metadata(spec, params)},
        tables={seed: table for seed, (_, table) in zip(seeds, outputs)},
    )
    result.summary = summarize(result)
    return result


# -- summaries -------------------------------------------------------------

SUMMARY_METRICS = ("steps", "simulated_time", "mean_response_time", "mb_fraction")


def summarize(result: ExperimentResult) -> dict:
    """Per-trial cross-seed mean and population stddev, plus practice ratios."""
    per_trial = {}
    for metric in SUMMARY_METRICS:
        m = result.matrix(metric)
        per_trial[metric] = {"mean": m.mean(axis=0).tolist(), "std": m.std(axis=0).tolist()}
    rt = np.array(per_trial["mean_response_time"]["mean"])
    steps = np.array(per_trial["steps"]["mean"])
    last = slice(max(0, len(rt) - 10), len(rt))
    ratios = {
        "response_time_last10_over_first": float(rt[last].mean() / rt[0]) if rt[0] else float("nan"),
        "steps_last10_over_first": float(steps[last].mean() / steps[0]) if steps[0] else float("nan"),
    }
    truncated = int(result.matrix("truncated").sum())
    return {"trials": result.trials, "n_seeds": len(result.per_seed), "per_trial": per_trial,
            "ratios": ratios, "truncated_trials": truncated}


def window_stats(result: ExperimentResult, metric: str, first: int, last: int) -> tuple[float, float]:
    """Mean and stddev across seeds of each seed's average over trials ``first..last``."""
    m = result.matrix(metric)[:, first - 1:last].mean(axis=1)
    return float(m.mean()), float(m.std())


def seed_averaged_curve(result: ExperimentResult, metric: str) -> np.ndarray:
    return result.matrix(metric).mean(axis=0)


# -- serialisation ---------------------------------------------------------

TRIAL_COLUMNS = ("seed", "trial", "steps", "simulated_time", "mean_response_time",
                 "mb_fraction", "truncated")


def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def trials_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for seed, recs in result.per_seed.items():
        for r in recs:
            w.writerow([seed, r.trial_index, r.steps, r.simulated_time,
                        _num(r.mean_response_time), _num(r.mb_fraction), int(r.truncated)])
    return buf.getvalue()


def summary_csv(result: ExperimentResult) -> str:
    summary = result.summary or summarize(result)
    pt = summary["per_trial"]
    header = ["trial"]
    for metric in SUMMARY_METRICS:
        header += [f"{metric}_mean", f"{metric}_std"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k in range(summary["trials"]):
        row = [k + 1]
        for metric in SUMMARY_METRICS:
            row += [_num(pt[metric]["mean"][k]), _num(pt[metric]["std"][k])]
        w.writerow(row)
    return buf.getvalue()


def result_to_dict(result: ExperimentResult) -> dict:
    return {
        "fingerprint": result.fingerprint,
        "config": result.config,
        "per_seed": {str(seed): [r.to_dict() for r in recs] for seed, recs in result.per_seed.items()},
        "summary": result.summary,
    }


def result_json(result: ExperimentResult) -> str:
    return json.dumps(result_to_dict(result), indent=1, sort_keys=True) + "\n"


# -- oracles ---------------------------------------------------------------

@dataclass
class OracleSolution:
    shortest_path_length: int | None
    optimal_values: np.ndarray
    optimal_qvalues: np.ndarray
    iterations: int


def bfs_shortest_path(world: GridWorld) -> int:
    """Minimal number of moves from start to goal, ignoring slip."""
    start, goal = world.start_state, world.goal_state
    dist = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if s == goal:
            return dist[s]
        for a in ACTIONS:
            nxt = world.move(s, a)
            if nxt not in dist:
                dist[nxt] = dist[s] + 1
                queue.append(nxt)
    raise UnreachableGoalError(f"goal {world.goal} is unreachable from {world.start}")


def bfs_distances_to_goal(world: GridWorld) -> dict[int, int]:
    """Shortest move count from every free state that can reach the goal."""
    goal = world.goal_state
    preds: dict[int, set[int]] = {s: set() for s in world.free_states()}
    for s in world.free_states():
        for a in ACTIONS:
            preds[world.move(s, a)].add(s)
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        s = queue.popleft()
        for p in preds[s]:
            if p not in dist:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def value_iteration(world: GridWorld, discount: float = 0.9, tolerance: float = 1e-10,
                    max_iterations: int = 100_000) -> OracleSolution:
    """Optimal values under the true dynamics, goal treated as terminal."""
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    P = transition_matrix(world)
    r = world.reward_vector()
    live = np.ones(world.n_states, dtype=bool)
    live[world.goal_state] = False
    v = np.zeros(world.n_states)
    q = np.zeros((world.n_states, len(ACTIONS)))
    for it in range(1, max_iterations + 1):
        q = P @ (r + discount * v)
        new_v = np.where(live, q.max(axis=1), 0.0)
        delta = np.abs(new_v - v).max()
        v = new_v
        if delta < tolerance:
            break
    try:
        d = bfs_shortest_path(world)
    except UnreachableGoalError:
        d = None
    return OracleSolution(shortest_path_length=d, optimal_values=v, optimal_qvalues=q,
                          iterations=it)
