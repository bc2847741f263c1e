"""Command-line entry point.

Subcommands map one-to-one onto the bench pipelines; every run writes
``report.csv`` and ``config.txt`` into --out, plus PGM maps where the
pipeline produces them. Exit codes: 0 full success, 1 if any problem row
errored (or the HMC check failed), 2 on usage errors.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

from . import bench, refpost, synthgen

COMMANDS = ("validate", "regress", "scaling", "proxy-bias", "map", "hmc-check")

_PROBLEM_CHOICES = {
    "validate": bench.CLASSIFICATION_PROBLEMS,
    "proxy-bias": bench.PROXY_PROBLEMS,
    "map": bench.CLASSIFICATION_PROBLEMS,
}


@dataclass
class CliConfig:
    command: str
    out_dir: str
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    verbosity: str = "normal"
    problems: tuple = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.verbosity not in ("quiet", "normal", "debug"):
            raise ValueError(f"unknown verbosity {self.verbosity!r}")


def _parser():
    p = argparse.ArgumentParser(
        prog="gnuq",
        description="Gradient-norm uncertainty experiments: estimator-vs-MCMC "
        "validation, scaling, proxy-covariance bias, and uncertainty maps.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    descr = {
        "validate": "classification validation suite (correlations vs the HMC reference)",
        "regress": "1D regression validation plus Fisher spectrum",
        "scaling": "correlation across the model-size ladder",
        "proxy-bias": "half-data Fisher bias experiment with maps",
        "map": "normalized uncertainty maps and dataset exports",
        "hmc-check": "standard-normal HMC calibration check",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=descr[name])
        sp.add_argument("--out", required=True, metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="config override, e.g. hmc.chains=2 (repeatable)",
        )
        if name in _PROBLEM_CHOICES:
            sp.add_argument(
                "--problems",
                metavar="A,B,...",
                help="comma-separated problem subset (default: all)",
            )
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--quiet", action="store_true", help="warnings only")
        g.add_argument("--debug", action="store_true", help="debug logging")
    return p


def parse_args(argv) -> CliConfig:
    """Strict parsing; unknown flags exit 2, --help exits 0."""
    ns = _parser().parse_args(argv)
    overrides = {}
    for item in ns.overrides:
        if "=" not in item:
            _parser().error(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    problems = None
    if getattr(ns, "problems", None):
        problems = tuple(s.strip() for s in ns.problems.split(",") if s.strip())
        allowed = _PROBLEM_CHOICES[ns.command]
        for prob in problems:
            if prob not in allowed:
                _parser().error(
                    f"unknown problem {prob!r} for {ns.command} "
                    f"(choose from {', '.join(allowed)})"
                )
    verbosity = "quiet" if ns.quiet else ("debug" if ns.debug else "normal")
    return CliConfig(
        command=ns.command,
        out_dir=ns.out,
        seed=ns.seed,
        overrides=overrides,
        verbosity=verbosity,
        problems=problems,
    )


def _say(config, *parts):
    if config.verbosity != "quiet":
        print(*parts)


def run(config: CliConfig) -> int:
    """Dispatch a parsed CLI config; returns the process exit code."""
    level = {"quiet": logging.WARNING, "normal": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=level[config.verbosity], format="%(name)s: %(message)s")
    os.makedirs(config.out_dir, exist_ok=True)
    try:
        bcfg = bench.apply_overrides(bench.BenchConfig(), config.overrides)
    except ValueError as exc:
        print(f"gnuq: {exc}", file=sys.stderr)
        return 2

    out = lambda name: os.path.join(config.out_dir, name)
    maps, datasets = {}, {}

    if config.command == "hmc-check":
        cal = refpost.gaussian_calibration(dim=2, seed=config.seed, config=bcfg.hmc)
        print(f"mean |error|      {cal.mean_abs_max:.4f}  (limit 0.05)")
        print(f"cov  |error|      {cal.cov_abs_max_err:.4f}  (limit 0.10)")
        print(f"acceptance rate   {cal.accept_rate:.4f}  (target {bcfg.hmc.target_accept} +- 0.1)")
        print(f"adapted step size {cal.step_size:.4f}")
        print("PASS" if cal.passed else "FAIL")
        report = bench.ExperimentReport([], bench.config_echo(bcfg, config.seed), config.seed)
    elif config.command == "validate":
        problems = config.problems or bench.CLASSIFICATION_PROBLEMS
        report = bench.run_validation_classification(problems, bcfg, config.seed)
    elif config.command == "regress":
        report = bench.run_validation_regression(bcfg, config.seed)
    elif config.command == "scaling":
        report = bench.run_scaling(config=bcfg, seed=config.seed)
    elif config.command == "proxy-bias":
        problems = config.problems or bench.PROXY_PROBLEMS
        report, maps = bench.run_proxy_bias(problems, bcfg, config.seed)
    else:  # map
        problems = config.problems or bench.CLASSIFICATION_PROBLEMS
        report, maps, datasets = bench.run_maps(problems, bcfg, config.seed)

    bench.emit_csv(report, out("report.csv"))
    with open(out("config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.config_echo)
    for problem in sorted(maps):
        for name in sorted(maps[problem]):
            path = out(f"{problem}-{name}.pgm")
            bench.emit_map_image(maps[problem][name], path)
            _say(config, "wrote", path)
    for problem in sorted(datasets):
        path = out(f"{problem}-data.csv")
        synthgen.to_csv(datasets[problem], path)
        _say(config, "wrote", path)

    failures = report.error_rows
    _say(
        config,
        f"wrote {out('report.csv')} ({len(report.rows)} rows, {len(failures)} failed)",
    )
    for row in failures:
        print(f"gnuq: {row.problem} failed ({row.estimator})", file=sys.stderr)
    if config.command == "hmc-check":
        return 0 if cal.passed else 1
    return 1 if failures else 0


def main():
    sys.exit(run(parse_args(sys.argv[1:])))


if __name__ == "__main__":
    main()
