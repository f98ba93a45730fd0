"""Command-line front end: ingest long-format data, estimate, simulate, benchmark.

File conventions
----------------
* Long format: UTF-8 CSV with header ``subject,index,value``; ``index`` is a
  1-based grid index. One record per (subject, index).
* Dense matrix: one row per line, comma-separated, 17 significant digits
  (values round-trip exactly through the text form).
* Sidecar metadata and benchmark machine files: ``key = <json value>`` lines.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from typing import Dict, Iterable, Optional

import numpy as np

from .assemble import estimate_covariance
from .benchmark import REFERENCE_RMSE, BenchmarkReport, run_benchmark
from .domain import (
    BandcovError,
    ConfigurationError,
    CvConfig,
    DataFormatError,
    EstimatorConfig,
    Grid,
    InsufficientDataError,
    ObservationSet,
    Sample,
)
from .simgen import generate, make_setting, population_covariance

__all__ = [
    "parse_long_csv",
    "write_long_csv",
    "write_matrix",
    "read_matrix",
    "main",
]

LONG_HEADER = "subject,index,value"
DFRAC_WINDOWS = {"1/5": 6, "1/3": 10, "1/2": 15}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_long_csv(path: str, p: Optional[int] = None,
                   t_min: float = 0.0, t_max: float = 1.0) -> ObservationSet:
    """Read a long-format file into an observation set.

    Per-subject indices are sorted; subjects keep first-appearance order.
    When ``p`` is omitted it is inferred as the largest index seen.
    """
    per_subject: Dict[str, dict[int, float]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        if header != LONG_HEADER:
            raise DataFormatError(f"{path}:1: expected header {LONG_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 comma-separated fields")
            subject, idx_text, val_text = parts
            try:
                idx = int(idx_text)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad index {idx_text!r}") from None
            try:
                val = float(val_text)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad value {val_text!r}") from None
            if idx < 1:
                raise DataFormatError(f"{path}:{lineno}: index {idx} must be >= 1")
            if not math.isfinite(val):
                raise DataFormatError(f"{path}:{lineno}: value must be finite")
            if subject not in per_subject:
                per_subject[subject] = {}
                order.append(subject)
            if idx in per_subject[subject]:
                raise DataFormatError(
                    f"{path}:{lineno}: duplicate record for subject {subject!r}, index {idx}")
            per_subject[subject][idx] = val
    if not order:
        raise DataFormatError(f"{path}: no data rows")
    max_idx = max(max(d) for d in per_subject.values())
    if p is None:
        p = max_idx
        print(f"warning: --p not given, inferred p = {p} from the data", file=sys.stderr)
    samples = []
    for subject in order:
        items = sorted(per_subject[subject].items())
        samples.append(Sample(subject_id=subject,
                              indices=np.array([i for i, _ in items], dtype=np.int64),
                              values=np.array([v for _, v in items])))
    grid = Grid.regular(p, t_min, t_max)
    return ObservationSet(grid=grid, samples=tuple(samples))


def write_long_csv(obs: ObservationSet, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(LONG_HEADER + "\n")
        for s in obs.samples:
            for idx, val in zip(s.indices, s.values):
                fh.write(f"{s.subject_id},{int(idx)},{_fmt(val)}\n")


def write_matrix(m: np.ndarray, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(m):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows)


def _write_keyvalues(pairs: Iterable[tuple[str, object]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {json.dumps(value)}\n")


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def cmd_estimate(args: argparse.Namespace) -> int:
    try:
        obs = parse_long_csv(args.input, p=args.p)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    d = obs.max_window_span
    band = args.b if args.b is not None else math.ceil(0.7 * d)
    increment = args.a if args.a is not None else max(1, math.ceil(0.1 * d))
    rank = None if args.rank == "auto" else int(args.rank)
    cfg = EstimatorConfig(band=band, increment=increment, rank=rank,
                          patch_mode=args.mode, cv=CvConfig(seed=args.seed))
    try:
        est = estimate_covariance(obs, cfg)
    except ConfigurationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except InsufficientDataError as exc:
        print(f"error: insufficient data: {exc}", file=sys.stderr)
        return 2

    write_matrix(est.matrix, args.output)
    pairs = [
        ("p", obs.grid.p),
        ("n", obs.n),
        ("band", band),
        ("increment", increment),
        ("rank", est.rank),
        ("mode", args.mode),
        ("patch_count", len(est.patch_counts)),
        ("noise_variances", list(est.patch_noise)),
        ("effective_counts", list(est.patch_counts)),
    ]
    if est.cv_result is not None:
        pairs.append(("cv_errors", {str(r): e for r, e in sorted(est.cv_result.errors.items())}))
        pairs.append(("cv_splits", est.cv_result.splits_used))
    _write_keyvalues(pairs, args.output + ".meta")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    if args.setting in (1, 2):
        if args.dfrac != "1/3" or args.K != 3:
            print("error: --dfrac/--K are only adjustable with --setting 3",
                  file=sys.stderr)
            return 2
    window = DFRAC_WINDOWS[args.dfrac]
    setting = make_setting(n_rep=args.nrep, window=window, n_modes=args.K,
                           seed=args.seed)
    obs = generate(setting)
    truth = population_covariance(setting, obs.grid)
    write_long_csv(obs, args.output)
    write_matrix(truth, args.output + ".truth")
    print(f"wrote {obs.n} subjects to {args.output} "
          f"(truth matrix: {args.output}.truth)")
    return 0


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def _format_text_report(report: BenchmarkReport) -> str:
    ref = REFERENCE_RMSE.get(report.table, {})
    header = (f"{'cell':<22} {'rmse mean (sd)':>18} {'ref rmse (sd)':>16} "
              f"{'rank mean (sd)':>16} {'time/fit s':>11} {'ok':>4} {'fail':>5}")
    lines = [f"benchmark table {report.table}: reps={report.reps} "
             f"seed={report.seed} jobs={report.jobs}", header, "-" * len(header)]
    for c in report.cells:
        ref_txt = ""
        if c.label in ref:
            ref_txt = f"{ref[c.label][0]:.3f} ({ref[c.label][1]:.2f})"
        lines.append(
            f"{c.label:<22} {c.rmse_mean:>10.4f} ({c.rmse_sd:.3f}) {ref_txt:>16} "
            f"{c.rank_mean:>10.2f} ({c.rank_sd:.2f}) {c.time_mean:>11.3f} "
            f"{c.n_ok:>4d} {c.n_failed:>5d}")
    lines.append("")
    for name, passed, detail in report.checks:
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return "\n".join(lines) + "\n"


def _machine_pairs(report: BenchmarkReport) -> list[tuple[str, object]]:
    # Wall-clock times are intentionally omitted: this file must be
    # byte-identical across runs with equal (flags, seed).
    pairs: list[tuple[str, object]] = [
        ("table", report.table),
        ("reps", report.reps),
        ("seed", report.seed),
        ("cells", [c.label for c in report.cells]),
    ]
    for c in report.cells:
        pairs.append((f"cell.{c.label}.rmse_mean", c.rmse_mean))
        pairs.append((f"cell.{c.label}.rmse_sd", c.rmse_sd))
        pairs.append((f"cell.{c.label}.rank_mean", c.rank_mean))
        pairs.append((f"cell.{c.label}.rank_sd", c.rank_sd))
        pairs.append((f"cell.{c.label}.rank_ge3_share", c.rank_ge3_share))
        pairs.append((f"cell.{c.label}.n_ok", c.n_ok))
        pairs.append((f"cell.{c.label}.n_failed", c.n_failed))
    for name, passed, detail in report.checks:
        pairs.append((f"check.{name}", bool(passed)))
    return pairs


def cmd_benchmark(args: argparse.Namespace) -> int:
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("BANDCOV_JOBS", "1"))
    report = run_benchmark(args.table, args.reps, args.seed, jobs=jobs,
                           fast=args.fast)
    text = _format_text_report(report)
    sys.stdout.write(text)
    _write_keyvalues(_machine_pairs(report), args.output)
    with open(args.output + ".txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return 0 if all(ok for _, ok, _ in report.checks) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandcov",
        description="Covariance estimation for banded longitudinal trajectories.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a covariance matrix from a long-format file")
    est.add_argument("--input", required=True, help="long-format CSV (subject,index,value)")
    est.add_argument("--p", type=int, default=None, help="grid size; inferred from data if omitted")
    est.add_argument("--b", type=int, default=None, help="band parameter (default: ceil(0.7*d))")
    est.add_argument("--a", type=int, default=None, help="increment parameter (default: max(1, ceil(0.1*d)))")
    est.add_argument("--rank", default="auto", help="truncation rank, or 'auto' for cross-validation")
    est.add_argument("--mode", choices=("complete", "pairwise"), default="complete")
    est.add_argument("--seed", type=int, default=0, help="seed for rank cross-validation")
    est.add_argument("--output", required=True, help="matrix output path (sidecar: <output>.meta)")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="generate a synthetic banded dataset plus its truth matrix")
    sim.add_argument("--setting", type=int, choices=(1, 2, 3), required=True)
    sim.add_argument("--nrep", type=int, required=True, help="subjects per window start")
    sim.add_argument("--dfrac", choices=tuple(DFRAC_WINDOWS), default="1/3",
                     help="window fraction d/p (setting 3 only)")
    sim.add_argument("--K", type=int, choices=(3, 10), default=3,
                     help="number of latent modes (setting 3 only)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output", required=True, help="dataset path (truth: <output>.truth)")
    sim.set_defaults(func=cmd_simulate)

    ben = sub.add_parser("benchmark", help="run a stock simulation table and check trends")
    ben.add_argument("--table", choices=("1", "2", "3"), required=True)
    ben.add_argument("--reps", type=int, default=100)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--fast", action="store_true", help="cap repetitions at 20")
    ben.add_argument("--jobs", type=int, default=None,
                     help="worker processes (default: $BANDCOV_JOBS or 1)")
    ben.add_argument("--output", required=True,
                     help="machine-readable report path (text copy: <output>.txt)")
    ben.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BandcovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, InsufficientDataError) else 1


if __name__ == "__main__":
    sys.exit(main())
