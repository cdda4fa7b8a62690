"""Command-line interface.

Subcommands: ``estimate``, ``test``, ``group``, ``simulate``,
``experiment``, ``plot``.  Configuration files are JSON mirroring
:class:`spvim.pipeline.EstimationConfig` field names; command-line
flags override config fields.  ``SPVIM_WORKERS`` supplies a worker
count when ``--workers`` is absent.

Exit codes: 0 success, 2 configuration, 3 data, 4 subset sampling,
5 solver, 6 external runner, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from dataclasses import replace

from .data import load_dataset, save_dataset
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    RunnerError,
    SamplingBudgetError,
    SolverError,
)
from .experiment import run_experiment
from .learners import LearnerSpec
from .measures import as_measure
from .pipeline import EstimationConfig, estimate_spvim
from .report import build_report, load_report, write_report
from .simulate import simulate

_MEASURE_FLAGS = {"r2": "r_squared", "accuracy": "accuracy", "auc": "auc"}


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--data", help="input data path")
    parser.add_argument("--outcome", help="outcome column name")
    parser.add_argument("--measure", choices=sorted(_MEASURE_FLAGS),
                        help="predictiveness measure")
    parser.add_argument("--gamma", type=float, help="subset draws per observation")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="worker threads")
    parser.add_argument("--runner", help="external model-runner command")
    parser.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spvim",
        description="Shapley population variable importance estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("estimate", "estimate per-feature importance with confidence intervals"),
        ("test", "estimate and run per-feature null-importance tests"),
        ("group", "estimate importance of feature groups from the config"),
        ("simulate", "draw a synthetic dataset from a DGP config"),
        ("experiment", "run a Monte Carlo experiment from a config"),
        ("plot", "render a report as a static figure"),
    ):
        _add_common(sub.add_parser(name, help=doc))
    return parser


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def _build_config(args) -> EstimationConfig:
    raw = _read_json(args.config, "config") if args.config else {}
    config = EstimationConfig.from_dict(raw)
    merged = config.to_dict()
    if args.measure:
        merged["measure"] = _MEASURE_FLAGS[args.measure]
    if args.gamma is not None:
        merged["gamma"] = args.gamma
    if args.seed is not None:
        merged["seed"] = args.seed
    workers = args.workers
    if workers is None and os.environ.get("SPVIM_WORKERS"):
        try:
            workers = int(os.environ["SPVIM_WORKERS"])
        except ValueError:
            raise ConfigError(
                f"SPVIM_WORKERS must be an integer, got {os.environ['SPVIM_WORKERS']!r}"
            ) from None
    if workers is not None:
        merged["workers"] = workers
    config = EstimationConfig.from_dict(merged)
    if args.runner:
        config = replace(
            config,
            learner=LearnerSpec("external", command=tuple(shlex.split(args.runner))),
        )
    return config


def _load_data(args, config):
    if not args.data:
        raise ConfigError("--data is required")
    if not args.outcome:
        raise ConfigError("--outcome is required")
    task = as_measure(config.measure).outcome_task
    return load_dataset(args.data, args.outcome, task)


def _print_summary(result, stream=sys.stdout):
    width = max(len(lbl) for lbl in result.labels)
    print(f"{'term':<{width}}  {'estimate':>10}  {'se':>9}  "
          f"{'ci_lower':>10}  {'ci_upper':>10}", file=stream)
    se = result.standard_errors
    for i, lbl in enumerate(result.labels):
        print(f"{lbl:<{width}}  {result.psi[i]:>10.5f}  {se[i]:>9.5f}  "
              f"{result.ci_lower[i]:>10.5f}  {result.ci_upper[i]:>10.5f}", file=stream)
    if result.tests:
        print("", file=stream)
        print("feature  statistic   p_value  reject", file=stream)
        for t in result.tests:
            print(f"{result.labels[t.feature]:<8} {t.statistic:>9.4f}  {t.p_value:>8.5f}"
                  f"  {t.reject}", file=stream)


def _cmd_estimate(args, force_tests=False, require_groups=False):
    config = _build_config(args)
    if force_tests and not config.run_tests:
        config = replace(config, run_tests=True)
    if require_groups and config.groups is None:
        raise ConfigError("the group subcommand requires 'groups' in the config")
    data = _load_data(args, config)
    started = time.perf_counter()
    result = estimate_spvim(data, config)
    report = build_report(result, config, wall_time_s=time.perf_counter() - started)
    if args.out:
        write_report(report, args.out)
    _print_summary(result)
    return 0


def _cmd_simulate(args):
    if not args.config:
        raise ConfigError("simulate requires --config with {'dgp': ..., 'n': ...}")
    spec = _read_json(args.config, "simulation config")
    if "dgp" not in spec or "n" not in spec:
        raise ConfigError("simulation config must contain 'dgp' and 'n'")
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    dataset = simulate(spec["dgp"], int(spec["n"]), seed)
    if not args.out:
        raise ConfigError("simulate requires --out for the dataset path")
    save_dataset(dataset, args.out)
    print(f"wrote {dataset.n} x {dataset.p} dataset to {args.out}")
    return 0


def _cmd_experiment(args):
    if not args.config:
        raise ConfigError("experiment requires --config")
    spec = _read_json(args.config, "experiment config")
    if args.seed is not None:
        spec["seed"] = args.seed
    workers = args.workers or int(os.environ.get("SPVIM_WORKERS", "1") or 1)
    report = run_experiment(spec, workers=workers)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_plot(args):
    if not args.data:
        raise ConfigError("plot requires --data pointing at a report file")
    if not args.out:
        raise ConfigError("plot requires --out for the figure path")
    report = load_report(args.data)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = report["labels"][1:]
    est = report["estimates"][1:]
    lo = report["ci_lower"][1:]
    hi = report["ci_upper"][1:]
    order = sorted(range(len(est)), key=lambda i: est[i])
    ypos = range(len(order))
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(order) + 1.5))
    ax.errorbar(
        [est[i] for i in order], list(ypos),
        xerr=[[est[i] - lo[i] for i in order], [hi[i] - est[i] for i in order]],
        fmt="o", capsize=3,
    )
    ax.axvline(0.0, color="grey", lw=0.8, ls="--")
    ax.set_yticks(list(ypos))
    ax.set_yticklabels([labels[i] for i in order])
    ax.set_xlabel("importance estimate")
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote figure to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "estimate": lambda: _cmd_estimate(args),
        "test": lambda: _cmd_estimate(args, force_tests=True),
        "group": lambda: _cmd_estimate(args, require_groups=True),
        "simulate": lambda: _cmd_simulate(args),
        "experiment": lambda: _cmd_experiment(args),
        "plot": lambda: _cmd_plot(args),
    }
    try:
        return handlers[args.command]()
    except (ConfigError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SamplingBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except RunnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
