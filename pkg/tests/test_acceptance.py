"""Exit criteria: one test and one report line per criterion."""

import itertools
import math
import time

import numpy as np

from dualproc.arbitration import (ConstantWeight, ControllerSpec, Mode, select_mode_interleaved,
                                  select_mode_weighted)
from dualproc.cli import main
from dualproc.gridworld import GridWorld, parse_map
from dualproc.harness import (ExperimentParams, bfs_distances_to_goal, bfs_shortest_path,
                              run_experiment, run_seed, seed_averaged_curve, value_iteration,
                              window_stats)
from dualproc.learner import greedy_action, greedy_policy_rollout
from dualproc.planner import DEFAULT_DEPTH, dls_plan
from dualproc.table import bellman_backup, init_table, perfect_table, td_update, update_transition

SEEDS = list(range(30))


def brute_force_mode(i, j, factor, chunk):
    # the published condition, evaluated with real division then floored
    k = math.floor(i / factor)
    if k <= 1:
        return Mode.MB
    return Mode.MB if j - k * (j // k) == 0 or j - chunk * (j // chunk) == 0 else Mode.MF


def test_c1_schedule_exactness(report):
    grid = list(itertools.product((1, 2, 5, 10), (2, 4, 8), range(1, 201), range(500)))
    t0 = time.perf_counter()
    got = [select_mode_interleaved(i, j, f, c) for f, c, i, j in grid]
    elapsed = time.perf_counter() - t0
    mismatches = sum(g is not brute_force_mode(i, j, f, c) for g, (f, c, i, j) in zip(got, grid))
    ok = mismatches == 0 and elapsed < 1.0
    report("C1 schedule exactness", ok, f"{mismatches} mismatches over {len(grid)} cases, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 1.0


def _oracle_worlds():
    for wd, ht in itertools.product(range(1, 7), repeat=2):
        if wd * ht < 2:
            continue
        for goal in itertools.product(range(ht), range(wd)):
            yield GridWorld(width=wd, height=ht, goal=goal)
    # walled layouts: every single wall on 4x4, and a few mazes
    for wall in itertools.product(range(4), repeat=2):
        if wall not in ((0, 0), (3, 3)):
            yield GridWorld(width=4, height=4, goal=(3, 3), walls=frozenset({wall}))
    mazes = ["S.#...\n.##.#.\n....#.\n.##...\n..#.#.\n#...#G\n",
             "S.....\n#####.\n......\n.#####\n......\n#####G\n",
             "S..#\n.#..\n.#.#\n...G\n"]
    for m in mazes:
        yield parse_map(m)


def test_c2_oracle_exactness(report):
    t0 = time.perf_counter()
    n_plans = bad_actions = 0
    worst_value_err = 0.0
    rng = np.random.default_rng(0)
    for w in _oracle_worlds():
        dist = bfs_distances_to_goal(w)
        t = perfect_table(w)
        depth = max(1, max(dist.values()))
        for s, d in dist.items():
            if d == 0:
                continue
            plan = dls_plan(t, w, s, depth, rng, node_budget=10**15)
            n_plans += 1
            if dist.get(w.move(s, plan.chosen_action)) != d - 1:
                bad_actions += 1
        sol = value_iteration(w, 0.9, 1e-10)
        if w.start_state != w.goal_state and w.start_state in dist:
            d = bfs_shortest_path(w)
            worst_value_err = max(worst_value_err,
                                  abs(sol.optimal_values[w.start_state] - 0.9 ** (d - 1)))
    elapsed = time.perf_counter() - t0
    ok = bad_actions == 0 and worst_value_err <= 1e-9 and elapsed < 10
    report("C2 oracle exactness", ok,
           f"{bad_actions}/{n_plans} off-path plans, max |V(start) - g^(d-1)| = {worst_value_err:.1e}, "
           f"{elapsed:.1f}s")
    assert bad_actions == 0
    assert worst_value_err <= 1e-9
    assert elapsed < 10


def test_c3_step_ordering_early_trials(report):
    world = GridWorld()
    t0 = time.perf_counter()
    stats = {}
    for kind in ("pure-mb", "dual", "pure-mf"):
        res = run_experiment(ControllerSpec(kind=kind), world, 5, SEEDS)
        stats[kind] = window_stats(res, "steps", 1, 5)
    elapsed = time.perf_counter() - t0
    (mb, mb_sd), (du, du_sd), (mf, mf_sd) = stats["pure-mb"], stats["dual"], stats["pure-mf"]
    ordered = mb < du < mf
    separated = mb + mb_sd < du - du_sd and du + du_sd < mf - mf_sd
    ok = ordered and separated and elapsed < 60
    report("C3 Fig.2 ordering, trials 1-5", ok,
           f"MB {mb:.1f}+-{mb_sd:.1f}, Dual {du:.1f}+-{du_sd:.1f}, MF {mf:.1f}+-{mf_sd:.1f}, "
           f"{elapsed:.1f}s")
    assert elapsed < 60
    assert ordered, "expected PureMB < InterleavedDual < PureMF in mean steps over trials 1-5"
    assert separated, "mean +- 1 stddev bands overlap"


def _late_rt(result, first=91, last=100):
    return float(seed_averaged_curve(result, "mean_response_time")[first - 1:last].mean())


def test_c4a_response_time_decay(default_compare, report):
    results, _ = default_compare
    dual = results["dual"]
    late, first = _late_rt(dual), float(seed_averaged_curve(dual, "mean_response_time")[0])
    ratio = late / first
    report("C4a Fig.4 decay vs trial 1", ratio < 0.5,
           f"Dual RT(91-100) / RT(1) = {late:.1f} / {first:.1f} = {ratio:.3f} (< 0.5)")
    assert ratio < 0.5


def test_c4b_response_time_vs_pure_mb(default_compare, report):
    results, _ = default_compare
    dual, mb = _late_rt(results["dual"]), _late_rt(results["mb"])
    ratio = dual / mb
    frac = float(seed_averaged_curve(results["dual"], "mb_fraction")[90:].mean())
    report("C4b Fig.4 Dual vs PureMB", ratio < 0.25,
           f"Dual RT(91-100) / PureMB RT(91-100) = {dual:.1f} / {mb:.1f} = {ratio:.3f} (< 0.25); "
           f"Dual MB fraction {frac:.3f}")
    assert ratio < 0.25


def test_c5_plateau(default_compare, report):
    results, _ = default_compare
    rt = seed_averaged_curve(results["dual"], "mean_response_time")[80:100]
    cv = float(rt.std() / rt.mean())
    report("C5 Fig.3 plateau", cv < 0.15, f"CV of Dual RT over trials 81-100 = {cv:.4f} (< 0.15)")
    assert cv < 0.15


def test_c6_convergence_quality(default_compare, report):
    results, _ = default_compare
    world = GridWorld()
    d = bfs_shortest_path(world)
    optimal = sum(greedy_policy_rollout(t, world, 10_000) == d
                  for t in results["dual"].tables.values())
    report("C6 greedy rollout optimal", optimal >= 28, f"{optimal}/30 seeds reach goal in {d} steps")
    assert optimal >= 28


def test_c7_table_fuzz(report):
    world = GridWorld(width=4, height=4, goal=(3, 3))
    t = init_table(world, 0.9, 0.1)
    rng = np.random.default_rng(2024)
    n_ops = 100_000
    ops = rng.integers(3, size=n_ops)
    states = rng.integers(world.n_states, size=n_ops)
    actions = rng.integers(4, size=n_ops)
    picks = rng.integers(5, size=n_ops)
    neighbors = [world.neighbors(s) for s in range(world.n_states)]
    rewards = world.reward_vector()
    bound = 1.0 / (1 - 0.9)
    worst_drift = worst_gap = worst_q = 0.0
    t0 = time.perf_counter()
    for op, s, a, k in zip(ops, states, actions, picks):
        nb = neighbors[s]
        n = nb[k % len(nb)]
        if op == 0:
            update_transition(t, s, a, n)
            worst_drift = max(worst_drift, abs(t.probs[s, a].sum() - 1.0))
        elif op == 1:
            td_update(t, s, a, rewards[n], n)
        else:
            bellman_backup(t, s, rewards)
        if op:
            worst_gap = max(worst_gap, abs(t.values[s] - t.qvalues[s].max()))
            worst_q = max(worst_q, abs(t.qvalues[s]).max())
    elapsed = time.perf_counter() - t0
    worst_drift = max(worst_drift, float(np.abs(t.probs.sum(axis=2) - 1).max()))
    worst_gap = max(worst_gap, float(np.abs(t.values - t.qvalues.max(axis=1)).max()))
    ok = worst_drift <= 1e-9 and worst_gap == 0.0 and worst_q <= bound and elapsed < 5
    report("C7 table fuzz", ok,
           f"{n_ops} ops, row drift {worst_drift:.1e}, V-maxQ gap {worst_gap:.1e}, "
           f"max|Q| {worst_q:.3f} <= {bound:.0f}, {elapsed:.2f}s")
    assert worst_drift <= 1e-9
    assert worst_gap == 0.0
    assert worst_q <= bound
    assert elapsed < 5


def test_c8_determinism(default_compare, tmp_path, report):
    _, seq_dir = default_compare
    par_dir = tmp_path / "compare_par"
    assert main(["compare", "--seeds", "0..29", "--workers", "2", "--out", str(par_dir)]) == 0
    seq_files = sorted(p.relative_to(seq_dir) for p in seq_dir.rglob("*") if p.is_file())
    par_files = sorted(p.relative_to(par_dir) for p in par_dir.rglob("*") if p.is_file())
    differing = [str(p) for p in seq_files if (seq_dir / p).read_bytes() != (par_dir / p).read_bytes()]
    ok = seq_files == par_files and not differing and len(seq_files) > 0
    report("C8 determinism", ok,
           f"{len(seq_files)} files, sequential vs 2 workers, {len(differing)} differ")
    assert seq_files == par_files
    assert not differing


def test_c9_degenerate_weights(report):
    world = GridWorld(width=5, height=5, goal=(4, 4))
    _, table = run_seed(ControllerSpec(kind="dual", factor=2), world, 30, 11, ExperimentParams())
    mismatches = checked = 0
    for s in world.free_states():
        if s == world.goal_state:
            continue
        for tie_seed in range(5):
            plan = dls_plan(table, world, s, DEFAULT_DEPTH, np.random.default_rng(tie_seed))
            w1 = select_mode_weighted(table, world, s, 1, ConstantWeight(1.0), DEFAULT_DEPTH,
                                      np.random.default_rng(tie_seed))
            greedy = greedy_action(table, s, np.random.default_rng(tie_seed))
            w0 = select_mode_weighted(table, world, s, 1, ConstantWeight(0.0), DEFAULT_DEPTH,
                                      np.random.default_rng(tie_seed))
            mismatches += (w1.action != plan.chosen_action) + (w0.action != greedy)
            checked += 2
    report("C9 degenerate weights", mismatches == 0, f"{mismatches}/{checked} disagreements")
    assert mismatches == 0
