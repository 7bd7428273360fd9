"""Command-line experiment runner: convergence traces, parameter sweeps, checks.

    python -m starcomp converge --seed 7 --out trace.csv
    python -m starcomp sweep --variable snr_db --values 0,5,10,15,20,25 --trials 50
    python -m starcomp analyze
    python -m starcomp validate --trials 10

Sweeps default to a desk-scale version of the reference scenario
(N = M = 16, K = 8) with the SNR referenced to 20 dBm; ``--full-scale``
switches to 64 antennas, elements and devices.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import all_passed, run_checks, write_report
from .aobpc import initial_state, run_aobpc
from .baselines import RandomCoupling, SchemeId, run_scheme
from .channel import generate_channels
from .model import compute_mse, dump_state, simulate_aircomp
from .scenario import (
    ConfigError,
    SystemConfig,
    build_geometry,
    default_config,
    desk_config,
    load_config,
    make_rng,
)

log = logging.getLogger("starcomp")

SWEEP_VARIABLES = ("K", "K_r", "M", "N", "snr_db")
RESULT_COLUMNS = (
    "scheme",
    "trial",
    "seed",
    "sweep_variable",
    "sweep_value",
    "final_mse",
    "iterations",
    "converged",
    "wall_ms",
)
CONVERGENCE_SNRS = (5.0, 15.0, 25.0)
FIGURE_SNR_REFERENCE_DBM = 20.0
THREADS_ENV = "STARIS_THREADS"

# Random stream purposes within one (trial, value index) cell.
_CHANNEL, _INIT, _COUPLING = 0, 1, 2


def cli_base_config(full_scale: bool = False) -> SystemConfig:
    base = default_config() if full_scale else desk_config()
    return base.replace(snr_reference_dbm=FIGURE_SNR_REFERENCE_DBM)


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    trials: int
    schemes: tuple[SchemeId, ...] = tuple(SchemeId)
    base: SystemConfig = field(default_factory=cli_base_config)

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}; pick one of {SWEEP_VARIABLES}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if not self.schemes:
            raise ConfigError("sweep needs at least one scheme")
        if self.variable == "K_r" and any(v > self.base.K for v in self.values):
            raise ConfigError(f"K_r values must not exceed K = {self.base.K}")
        if self.variable == "M" and any(v % self.base.M_y for v in self.values):
            raise ConfigError(f"M values must be multiples of M_y = {self.base.M_y}")

    def config_for(self, value) -> SystemConfig:
        if self.variable == "snr_db":
            return self.base.replace(snr_db=float(value))
        return self.base.replace(**{self.variable: int(value)})


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    trial: int
    seed: int
    sweep_variable: str
    sweep_value: float
    final_mse: float
    iterations: int
    converged: bool
    wall_ms: float | None = None

    def as_csv(self) -> list[str]:
        return [
            self.scheme,
            str(self.trial),
            str(self.seed),
            self.sweep_variable,
            _fmt_value(self.sweep_value),
            repr(float(self.final_mse)),
            str(self.iterations),
            str(self.converged).lower(),
            "" if self.wall_ms is None else f"{self.wall_ms:.3f}",
        ]


def _fmt_value(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _run_cell(spec: SweepSpec, seed: int, value_idx: int, trial: int, timing: bool) -> list[ResultRow]:
    value = spec.values[value_idx]
    try:
        config = spec.config_for(value)
    except (ConfigError, ValueError, TypeError) as exc:
        log.error("skipping %s=%s trial %d: %s", spec.variable, value, trial, exc)
        return []
    ch = generate_channels(config, build_geometry(config), make_rng(seed, (trial, value_idx, _CHANNEL)))
    init = initial_state(ch, config.power, config.sigma2, make_rng(seed, (trial, value_idx, _INIT)))
    coupling = RandomCoupling.draw(ch.M, make_rng(seed, (trial, value_idx, _COUPLING)))
    rows = []
    for scheme in spec.schemes:
        t0 = time.perf_counter()
        trace = run_scheme(scheme, config, ch, init, coupling)
        wall = (time.perf_counter() - t0) * 1e3 if timing else None
        rows.append(
            ResultRow(
                scheme=scheme.value,
                trial=trial,
                seed=seed,
                sweep_variable=spec.variable,
                sweep_value=float(value),
                final_mse=trace.final_mse,
                iterations=trace.iterations,
                converged=trace.converged,
                wall_ms=wall,
            )
        )
    return rows


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be non-negative")
    return n


def run_sweep(spec: SweepSpec, seed: int = 0, timing: bool = False, threads: int | None = None) -> list[ResultRow]:
    """All (value, trial) cells, every scheme from a shared start; rows sorted by scheme, value, trial.

    Cell ``(trial, value_idx)`` draws channels, start point and random
    coupling from its own streams, so the result does not depend on the
    order (or concurrency) in which cells run.
    """
    threads = thread_count() if threads is None else threads
    cells = [(vi, t) for vi in range(len(spec.values)) for t in range(spec.trials)]
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda c: _run_cell(spec, seed, c[0], c[1], timing), cells))
    else:
        chunks = [_run_cell(spec, seed, vi, t, timing) for vi, t in cells]
    order = {s.value: i for i, s in enumerate(SchemeId)}
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (order[r.scheme], r.sweep_value, r.trial))
    return rows


def write_rows(rows: Sequence[ResultRow], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())


def mean_mse(rows: Sequence[ResultRow]) -> dict[tuple[str, float], float]:
    """Arithmetic mean of ``final_mse`` per (scheme, sweep value)."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r.final_mse)
    return {k: float(np.mean(v)) for k, v in groups.items()}


def emit_convergence(config: SystemConfig, seed: int, snrs: Sequence[float] = CONVERGENCE_SNRS):
    """AO-BPC traces on one channel draw at several SNRs.

    Returns ``(rows, traces)`` where rows are ``(snr_db, iteration, mse)``
    and iteration 0 is the random start.
    """
    ch = generate_channels(config, build_geometry(config), make_rng(seed, (0, 0, _CHANNEL)))
    rows, traces = [], {}
    for snr in snrs:
        cfg = config.replace(snr_db=float(snr))
        init = initial_state(ch, cfg.power, cfg.sigma2, make_rng(seed, (0, 0, _INIT)))
        trace = run_aobpc(cfg, ch, init)
        traces[float(snr)] = trace
        rows.extend((float(snr), i, mse) for i, mse in enumerate(trace.mse_per_iter))
    return rows, traces, ch


def _write_convergence(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["snr_db", "iteration", "mse"])
    for snr, i, mse in rows:
        writer.writerow([_fmt_value(snr), i, repr(float(mse))])


def validate_states(config: SystemConfig, seed: int, states: int, samples: int):
    """Monte-Carlo MSE against the analytic value on random optimized states."""
    out = []
    for i in range(states):
        ch = generate_channels(config, build_geometry(config), make_rng(seed, (i, 0, _CHANNEL)))
        init = initial_state(ch, config.power, config.sigma2, make_rng(seed, (i, 0, _INIT)))
        state = run_aobpc(config, ch, init).final_state
        analytic = compute_mse(ch, state, config.sigma2)
        empirical = simulate_aircomp(ch, state, config.sigma2, make_rng(seed, (i, 0, 3)), samples)
        out.append((i, analytic, empirical, abs(empirical - analytic) / analytic, state))
    return out


# ---------------------------------------------------------------- argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file overriding scenario fields")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    common.add_argument("--full-scale", action="store_true", help="start from 64/64/64 instead of desk scale")

    parser = _Parser(prog="starcomp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("converge", parents=[common], help="AO-BPC traces at several SNRs")
    p.add_argument("--values", type=_csv_list, default=list(CONVERGENCE_SNRS), help="SNRs in dB")
    p.add_argument("--dump-state", type=Path, help="write each final state to PATH with an _snr<x> suffix")

    p = sub.add_parser("sweep", parents=[common], help="compare schemes over one parameter")
    p.add_argument("--variable", choices=SWEEP_VARIABLES, default="snr_db")
    p.add_argument("--values", type=_csv_list, default=[0, 5, 10, 15, 20, 25])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--scheme", default="all", help="comma list of ao-bpc, cris, ao-rpc, ao-wpc, or all")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column")

    p = sub.add_parser("analyze", parents=[common], help="closed-form and large-array check battery")
    p.add_argument("--trials", type=int, default=10, help="instances per check")

    p = sub.add_parser("validate", parents=[common], help="Monte-Carlo MSE against the analytic MSE")
    p.add_argument("--trials", type=int, default=10, help="number of optimized states")
    p.add_argument("--samples", type=int, default=1_000_000, help="symbol draws per state")
    p.add_argument("--dump-state", type=Path, help="write each final state to PATH with an _i<k> suffix")
    return parser


def _suffixed(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}_{tag}{path.suffix}")


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        base = cli_base_config(args.full_scale)
        config = load_config(args.config, base) if args.config else base
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        config = config.replace(seed=args.seed)
        return _dispatch(args, config)
    except ConfigError as exc:
        print(f"starcomp: config error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, config: SystemConfig) -> int:
    buf = io.StringIO()
    if args.command == "converge":
        rows, traces, ch = emit_convergence(config, args.seed, args.values)
        _write_convergence(rows, buf)
        for snr, trace in traces.items():
            log.info("SNR %s dB: %d iterations, final MSE %.6g", _fmt_value(snr), trace.iterations, trace.final_mse)
            if args.dump_state:
                dump_state(trace.final_state, _suffixed(args.dump_state, f"snr{_fmt_value(snr)}"))
        _emit(buf.getvalue(), args.out)
        return 0

    if args.command == "sweep":
        try:
            schemes = tuple(SchemeId.parse(args.scheme))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        values = tuple(args.values) if args.variable == "snr_db" else tuple(int(v) for v in args.values)
        spec = SweepSpec(args.variable, values, args.trials, schemes, config)
        rows = run_sweep(spec, args.seed, timing=args.timing)
        write_rows(rows, buf)
        _emit(buf.getvalue(), args.out)
        for (scheme, value), m in sorted(mean_mse(rows).items()):
            log.info("%s %s=%s mean MSE %.6g", scheme, spec.variable, _fmt_value(value), m)
        return 0

    if args.command == "analyze":
        if args.trials < 1:
            raise ConfigError("trials must be positive")
        records = run_checks(config, args.seed, args.trials)
        write_report(records, buf)
        _emit(buf.getvalue(), args.out)
        failed = [r for r in records if not r.passed]
        for r in failed:
            log.error("check %s failed on instance %d (%r vs %r)", r.check_name, r.instance_id, r.value_lhs, r.value_rhs)
        return 0 if all_passed(records) else 2

    # validate
    if args.trials < 1 or args.samples < 1:
        raise ConfigError("trials and samples must be positive")
    results = validate_states(config, args.seed, args.trials, args.samples)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["instance", "analytic_mse", "empirical_mse", "rel_err"])
    for i, a, e, rel, state in results:
        writer.writerow([i, repr(a), repr(e), repr(rel)])
        if args.dump_state:
            dump_state(state, _suffixed(args.dump_state, f"i{i}"))
    _emit(buf.getvalue(), args.out)
    return 0 if all(r[3] <= 0.01 for r in results) else 2


if __name__ == "__main__":
    sys.exit(main())
