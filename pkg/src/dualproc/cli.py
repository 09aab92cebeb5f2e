"""Command-line entry point.

    dualproc run [options]
    dualproc compare --compare mb,mf,dual [options]
    dualproc dump-table --seed 0 --after-trial 100 [options]

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags. The resolved settings (minus the output
directory and worker count) are written to ``config.resolved`` (JSON) in the
output directory and can be passed back via ``--config``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .arbitration import ControllerSpec, LinearHandoff, parse_kind
from .gridworld import GridWorld, load_map
from .harness import (ExperimentParams, ExperimentResult, result_json, run_experiment, run_seed,
                      summary_csv, trials_csv)
from .table import dumps_table, init_table


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    map: str | None = None
    width: int = 10
    height: int = 10
    start: list[int] = field(default_factory=lambda: [0, 0])
    goal: list[int] | None = None
    goal_reward: float = 1.0
    step_reward: float = 0.0
    slip: float = 0.0
    controller: str = "dual"
    factor: int = 5
    chunk_size: int = 4
    weight_handoff: float = 50.0
    smoothing: float = 0.1
    depth: int = 4
    node_budget: int = 10**6
    max_steps: int = 10_000
    gamma: float = 0.9
    alpha: float = 0.1
    epsilon: float = 0.1
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.01
    trials: int = 100
    seeds: list[int] = field(default_factory=lambda: list(range(30)))
    compare: list[str] = field(default_factory=lambda: ["mb", "mf", "dual"])
    out: str = "out"
    workers: int = 1
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])

    def validate(self) -> None:
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        check(self.width >= 1 and self.height >= 1, "width and height must be >= 1")
        check(0.0 <= self.slip <= 1.0, "slip must lie in [0, 1]")
        check(self.factor >= 1, f"factor must be >= 1 (got {self.factor})")
        check(self.chunk_size >= 1, f"chunk_size must be >= 1 (got {self.chunk_size})")
        check(self.weight_handoff > 0, "weight_handoff must be > 0")
        check(0.0 < self.smoothing <= 1.0, "smoothing must lie in (0, 1]")
        check(self.depth >= 1, f"depth must be >= 1 (got {self.depth})")
        check(self.node_budget >= 1, "node_budget must be >= 1")
        check(self.max_steps >= 1, "max_steps must be >= 1")
        check(0.0 < self.gamma < 1.0, f"gamma must lie in (0, 1) (got {self.gamma})")
        check(0.0 < self.alpha <= 1.0, f"alpha must lie in (0, 1] (got {self.alpha})")
        check(0.0 <= self.epsilon <= 1.0, f"epsilon must lie in [0, 1] (got {self.epsilon})")
        check(0.0 < self.epsilon_decay <= 1.0, "epsilon_decay must lie in (0, 1]")
        check(0.0 <= self.epsilon_floor <= 1.0, "epsilon_floor must lie in [0, 1]")
        check(self.trials >= 1, f"trials must be >= 1 (got {self.trials})")
        check(len(self.seeds) >= 1, "at least one seed is required")
        check(len(set(self.seeds)) == len(self.seeds), "seeds must be distinct")
        check(self.workers >= 1, "workers must be >= 1")
        check(set(self.formats) <= {"csv", "json"} and self.formats, "formats must be csv and/or json")
        check(len(self.start) == 2 and (self.goal is None or len(self.goal) == 2),
              "start and goal are [row, col] pairs")
        try:
            parse_kind(self.controller)
            for name in self.compare:
                parse_kind(name)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def world(self) -> GridWorld:
        extra = dict(goal_reward=self.goal_reward, step_reward=self.step_reward, slip_prob=self.slip)
        try:
            if self.map:
                return load_map(self.map, **extra)
            goal = self.goal if self.goal is not None else [self.height - 1, self.width - 1]
            return GridWorld(width=self.width, height=self.height, start=tuple(self.start),
                             goal=tuple(goal), **extra)
        except OSError as e:
            raise ConfigError(f"cannot read map file: {e}") from None
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def controller_spec(self, kind: str | None = None) -> ControllerSpec:
        return ControllerSpec(kind=parse_kind(kind or self.controller), factor=self.factor,
                              chunk_size=self.chunk_size,
                              weight_schedule=LinearHandoff(self.weight_handoff),
                              reliability_smoothing=self.smoothing)

    def params(self) -> ExperimentParams:
        return ExperimentParams(discount=self.gamma, learning_rate=self.alpha, depth=self.depth,
                                epsilon=self.epsilon, epsilon_decay=self.epsilon_decay,
                                epsilon_floor=self.epsilon_floor, max_steps=self.max_steps,
                                node_budget=self.node_budget)

    def to_json(self) -> str:
        """Experiment-defining settings; ``out`` and ``workers`` do not affect results."""
        d = {k: v for k, v in asdict(self).items() if k not in INVOCATION_ONLY}
        return json.dumps(d, indent=1, sort_keys=True) + "\n"


INVOCATION_ONLY = ("out", "workers")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_seeds(text: str | int | list) -> list[int]:
    """``"a..b"`` inclusive range, ``"1,4,9"`` list, or a bare count ``n`` (seeds 0..n-1)."""
    if isinstance(text, list):
        return [int(x) for x in text]
    if isinstance(text, int):
        if text < 1:
            raise ConfigError("seed count must be >= 1")
        return list(range(text))
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            seeds = list(range(lo, hi + 1))
        elif "," in text:
            seeds = [int(x) for x in text.split(",") if x.strip()]
        else:
            seeds = None
            count = int(text)
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}") from None
    if seeds is None:
        return parse_seeds(count)
    if not seeds:
        raise ConfigError(f"empty seed list {text!r}")
    return seeds


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if name == "seeds":
        return parse_seeds(value)
    try:
        if name in ("compare", "formats"):
            return [v.strip() for v in value.split(",")] if isinstance(value, str) else list(value)
        if name in ("start", "goal"):
            if value is None:
                return None
            if isinstance(value, str):
                value = value.split(",")
            return [int(v) for v in value]
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {name}: {value!r}") from None


def load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config file {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    for source in (file_values or {}, overrides or {}):
        for k, v in source.items():
            if k not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key: {k}")
            values[k] = _coerce(k, v)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- argument parsing --------------------------------------------------------

_FLAGS = [
    ("--map", "map", str, "text map file (. free, # wall, S start, G goal)"),
    ("--width", "width", int, None),
    ("--height", "height", int, None),
    ("--start", "start", str, "start cell as row,col"),
    ("--goal", "goal", str, "goal cell as row,col (default: bottom-right)"),
    ("--goal-reward", "goal_reward", float, None),
    ("--step-reward", "step_reward", float, None),
    ("--slip", "slip", float, "probability of a lateral slip"),
    ("--controller", "controller", str, "pure-mb | pure-mf | dual | weighted | uncertainty"),
    ("--factor", "factor", int, "trial-index divisor of the interleaved rule"),
    ("--chunk-size", "chunk_size", int, "periodic model-based cadence"),
    ("--weight-handoff", "weight_handoff", float, "trials until the weighted controller is all MF"),
    ("--smoothing", "smoothing", float, "error smoothing of the uncertainty controller"),
    ("--depth", "depth", int, "search depth of the planner"),
    ("--node-budget", "node_budget", int, None),
    ("--max-steps", "max_steps", int, "step cap per trial"),
    ("--gamma", "gamma", float, "discount"),
    ("--alpha", "alpha", float, "TD learning rate"),
    ("--epsilon", "epsilon", float, "initial exploration rate (0 = greedy)"),
    ("--epsilon-decay", "epsilon_decay", float, None),
    ("--epsilon-floor", "epsilon_floor", float, None),
    ("--trials", "trials", int, None),
    ("--seeds", "seeds", str, "a..b, a list 1,2,3, or a count n"),
    ("--out", "out", str, "output directory"),
    ("--workers", "workers", int, "worker processes (seeds run in parallel)"),
    ("--formats", "formats", str, "csv,json"),
]


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    for flag, dest, typ, help_ in _FLAGS:
        p.add_argument(flag, dest=dest, type=typ, default=None, help=help_)
    return p


def make_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dualproc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", parents=[common], help="run one controller")
    run.add_argument("--compare", dest="compare", default=None,
                     help="run several controllers instead, e.g. mb,mf,dual")
    cmp_ = sub.add_parser("compare", parents=[common], help="run several controllers side by side")
    cmp_.add_argument("--compare", dest="compare", default=None, help="controllers (default mb,mf,dual)")
    dump = sub.add_parser("dump-table", parents=[common], help="write the table after some trials")
    dump.add_argument("--seed", type=int, default=None, help="seed to replay (default: first seed)")
    dump.add_argument("--after-trial", type=int, default=None,
                      help="number of trials to replay (default: all)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    path = getattr(args, "config", None)
    file_values = load_config_file(path) if path else {}
    overrides = {dest: getattr(args, dest) for _, dest, _, _ in _FLAGS
                 if getattr(args, dest, None) is not None}
    if getattr(args, "compare", None) is not None:
        overrides["compare"] = args.compare
    return build_config(file_values, overrides)


def parse_config(argv: list[str] | None = None) -> tuple[argparse.Namespace, RunConfig]:
    args = make_parser().parse_args(argv)
    return args, config_from_args(args)


# -- commands ----------------------------------------------------------------

def _write_result(result: ExperimentResult, outdir: Path, formats: list[str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        (outdir / "trials.csv").write_text(trials_csv(result))
        (outdir / "summary.csv").write_text(summary_csv(result))
    if "json" in formats:
        (outdir / "result.json").write_text(result_json(result))


def _final_line(label: str, result: ExperimentResult) -> str:
    pt = result.summary["per_trial"]
    return (f"{label}: seeds={len(result.per_seed)} trials={result.trials} "
            f"final_mean_steps={pt['steps']['mean'][-1]:.2f} "
            f"final_mean_response_time={pt['mean_response_time']['mean'][-1]:.2f}")


def cmd_run(cfg: RunConfig) -> int:
    world = cfg.world()
    out = Path(cfg.out)
    result = run_experiment(cfg.controller_spec(), world, cfg.trials, cfg.seeds, cfg.params(),
                            workers=cfg.workers)
    _write_result(result, out, cfg.formats)
    (out / "config.resolved").write_text(cfg.to_json())
    print(_final_line(parse_kind(cfg.controller).value, result))
    return 0


def comparison_csv(results: dict[str, ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["trial"]
    metrics = ("steps", "simulated_time", "mean_response_time", "mb_fraction")
    for label in results:
        for m in metrics:
            header += [f"{label}_{m}_mean", f"{label}_{m}_std"]
    w.writerow(header)
    n = min(r.trials for r in results.values())
    for k in range(n):
        row = [k + 1]
        for r in results.values():
            pt = r.summary["per_trial"]
            for m in metrics:
                row += [repr(float(pt[m]["mean"][k])), repr(float(pt[m]["std"][k]))]
        w.writerow(row)
    return buf.getvalue()


def run_compare(cfg: RunConfig, echo: bool = True) -> dict[str, ExperimentResult]:
    """Run every controller in ``cfg.compare`` and write all outputs."""
    world = cfg.world()
    out = Path(cfg.out)
    results = {}
    for label in cfg.compare:
        result = run_experiment(cfg.controller_spec(label), world, cfg.trials, cfg.seeds,
                                cfg.params(), workers=cfg.workers)
        _write_result(result, out / label, cfg.formats)
        results[label] = result
        if echo:
            print(_final_line(label, result))
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(comparison_csv(results))
    (out / "config.resolved").write_text(cfg.to_json())
    return results


def cmd_compare(cfg: RunConfig) -> int:
    run_compare(cfg)
    return 0


def cmd_dump_table(cfg: RunConfig, seed: int | None = None, after_trial: int | None = None) -> int:
    seed = cfg.seeds[0] if seed is None else seed
    after_trial = cfg.trials if after_trial is None else after_trial
    if not 0 <= after_trial <= cfg.trials:
        raise ConfigError(f"after-trial must lie in [0, {cfg.trials}]")
    world = cfg.world()
    params = cfg.params()
    if after_trial == 0:
        table = init_table(world, params.discount, params.learning_rate)
    else:
        _, table = run_seed(cfg.controller_spec(), world, after_trial, seed, params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"table_seed{seed}_trial{after_trial}.json"
    path.write_text(dumps_table(table))
    (out / "config.resolved").write_text(cfg.to_json())
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        cfg = config_from_args(args)
        if args.command == "dump-table":
            return cmd_dump_table(cfg, args.seed, args.after_trial)
        if args.command == "compare" or (args.command == "run" and args.compare is not None):
            return cmd_compare(cfg)
        return cmd_run(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
