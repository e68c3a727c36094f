"""Command-line driver for the experiment scenarios.

Exit status: 0 all checks passed, 1 a check failed, 2 bad configuration,
3 a solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConvergenceError
from .io import write_csv, write_json
from .scenarios import DEFAULTS, STOCHASTIC, SUMMARY_HEADER

log = logging.getLogger("nonlocalfb")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    parameters: dict = field(default_factory=dict)
    output_dir: Path = Path("runs")

    def resolved(self) -> dict:
        """Defaults overlaid with the given parameters, each cast to the default's type."""
        if self.scenario not in DEFAULTS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        defaults = DEFAULTS[self.scenario][1]
        params = dict(defaults)
        for key, raw in self.parameters.items():
            if key not in defaults:
                raise ConfigError(f"scenario {self.scenario!r} has no parameter {key!r}")
            params[key] = _cast(raw, defaults[key], key)
        if self.scenario in STOCHASTIC and "seed" not in params:
            raise ConfigError("stochastic scenarios need a seed")
        return params


def _cast(raw, like, key):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(like, list):
            return [float(v) for v in raw.split(",") if v.strip()]
        if isinstance(like, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {raw!r}") from err
    return raw


def parse_kv_lines(lines) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config_file(path) -> dict:
    try:
        return parse_kv_lines(Path(path).read_text().splitlines())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err


def run_scenario(cfg: ExperimentConfig) -> int:
    """Run one scenario, write its artifacts, return the exit status."""
    params = cfg.resolved()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fn = DEFAULTS[cfg.scenario][0]
    start = time.perf_counter()
    manifest = {
        "scenario": cfg.scenario,
        "parameters": params,
        "build": {"package": "nonlocalfb", "version": __version__, "python": platform.python_version(),
                  "numpy": np.__version__},
        "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    try:
        result = fn(params, out)
    except ConvergenceError as err:
        manifest["wall_time_s"] = time.perf_counter() - start
        manifest["error"] = str(err)
        write_json(out / "manifest.json", manifest)
        write_json(out / "verdict.json", {"scenario": cfg.scenario, "passed": False,
                                          "error": str(err), "residual": err.residual})
        log.error("%s: %s", cfg.scenario, err)
        return EXIT_NONCONVERGED
    write_csv(out / "summary.csv", SUMMARY_HEADER, [c.row() for c in result.checks])
    manifest["wall_time_s"] = time.perf_counter() - start
    manifest["files"] = sorted(Path(f).name for f in result.files) + ["summary.csv"]
    manifest["info"] = result.info
    write_json(out / "manifest.json", manifest)
    write_json(out / "verdict.json", {
        "scenario": cfg.scenario,
        "passed": result.passed,
        "checks": [dict(zip(SUMMARY_HEADER, c.row())) for c in result.checks],
    })
    for c in result.checks:
        log.info("%-32s %s  value=%.6g", c.metric, "PASS" if c.passed else "FAIL", c.value)
    return EXIT_PASS if result.passed else EXIT_FAIL


def _sweep_child(args):
    scenario, params, out = args
    try:
        code = run_scenario(ExperimentConfig(scenario, params, Path(out)))
    except Exception as err:  # reported in the aggregate table
        return out, -1, repr(err)
    return out, code, ""


def sweep(scenario: str, axis: str, values, base: dict, out: Path, workers: int = 1) -> int:
    """Run ``scenario`` once per value of ``axis`` and aggregate the summaries."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    if scenario not in DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if axis not in DEFAULTS[scenario][1]:
        raise ConfigError(f"scenario {scenario!r} has no parameter {axis!r}")
    jobs = []
    for v in values:
        params = dict(base)
        params[axis] = v
        ExperimentConfig(scenario, params, out).resolved()  # validate before launching
        jobs.append((scenario, params, str(Path(out) / f"{axis}={v}")))
    rows, worst = [], EXIT_PASS
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        pending = [pool.submit(_sweep_child, j) for j in jobs] if pool else None
        for i, (_, params, child) in enumerate(jobs):
            _, code, err = pending[i].result() if pool else _sweep_child(jobs[i])
            summary = Path(child) / "summary.csv"
            if code in (-1, EXIT_NONCONVERGED) or not summary.exists():
                rows.append([axis, params[axis], "error", float("nan"), float("nan"),
                             float("nan"), "", False])
                worst = EXIT_NONCONVERGED if code == EXIT_NONCONVERGED else EXIT_FAIL
                log.error("sweep child %s failed (%s); aborting", child, err or f"exit {code}")
                if pool:
                    for f in pending[i + 1:]:
                        f.cancel()
                break
            with summary.open() as fh:
                for r in list(csv.reader(fh))[1:]:
                    rows.append([axis, params[axis], *r[:5], r[5] == "true"])
            worst = max(worst, code)
    finally:
        if pool:
            pool.shutdown(wait=True, cancel_futures=True)
    write_csv(Path(out) / "sweep.csv", ["axis", "axis_value", *SUMMARY_HEADER], rows)
    return worst


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value parameter file")
    common.add_argument("--out", help="output directory (default runs/<scenario>)")
    common.add_argument("--seed", type=int, help="random seed for stochastic scenarios")
    common.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one parameter (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="nonlocalfb",
                                     description="Nonlocal diffusion and aggregation experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in DEFAULTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} scenario")
    sw = sub.add_parser("sweep", parents=[common], help="run a scenario over a parameter list")
    sw.add_argument("scenario", choices=list(DEFAULTS))
    sw.add_argument("axis", help="parameter to vary")
    sw.add_argument("values", help="comma-separated values")
    return parser


def _overrides(args) -> dict:
    params = load_config_file(args.config) if args.config else {}
    params.update(parse_kv_lines(args.set))
    if args.seed is not None:
        params["seed"] = str(args.seed)
    return params


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help()
        return EXIT_PASS
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_PASS if err.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        params = _overrides(args)
        if args.command == "sweep":
            out = Path(args.out or f"runs/sweep-{args.scenario}-{args.axis}")
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            return sweep(args.scenario, args.axis, values, params, out, args.workers)
        out = Path(args.out or f"runs/{args.command}")
        return run_scenario(ExperimentConfig(args.command, params, out))
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except ValueError as err:
        log.error("invalid parameters: %s", err)
        return EXIT_CONFIG
    except ConvergenceError as err:
        log.error("no convergence: %s", err)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
