"""Risk against the true curve and the fusion vs. no-fusion Monte Carlo benchmark."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .cv import CVConfig
from .data import FUSED, NONFUSED, derive_seed
from .errors import DataError, FusionError
from .krr import FittedCDRF
from .nuisance import NuisanceConfig
from .pipeline import KernelConfig, fit_cdrf
from .reference import ReferenceMeasure
from .simulation import SCENARIO_FUSION, generate, true_cdrf

log = logging.getLogger(__name__)

METHODS = {FUSED: "fusion", NONFUSED: "no_fusion"}
RESULT_FIELDS = ["scenario", "ref_measure", "n", "run", "method", "risk"]
TABLE_FIELDS = ["scenario", "ref_measure", "n", "fusion_median", "nofusion_median", "pct_reduction"]
MAX_FAILURE_RATE = 0.05


def empirical_risk_vs_truth(model, family: str, mu: ReferenceMeasure, m_eval: int = 1000, seed: int = 0) -> float:
    """Mean squared difference to the true curve at ``m_eval`` draws from ``mu``."""
    if m_eval < 1:
        raise ValueError("m_eval must be >= 1")
    a = mu.sample(m_eval, seed)
    predict = model.predict if hasattr(model, "predict") else model
    diff = np.asarray(predict(a), dtype=float).reshape(-1) - np.asarray(true_cdrf(family, a)).reshape(-1)
    return float(np.mean(diff * diff))


def percent_reduction(fused: float, nonfused: float) -> int:
    """``100 (1 - fused / nonfused)`` rounded half up."""
    if not nonfused > 0:
        raise ValueError("no-fusion risk must be positive")
    return int(math.floor(100.0 * (1.0 - fused / nonfused) + 0.5))


class RiskReport(NamedTuple):
    scenario: str
    ref_measure: str
    n: int
    run: int
    method: str
    risk: float


class TableRow(NamedTuple):
    scenario: str
    ref_measure: str
    n: int
    fusion_median: float
    nofusion_median: float
    pct_reduction: int


@dataclass(frozen=True)
class BenchmarkConfig:
    families: Sequence[str] = ("gaussian",)
    measures: Sequence[str] = ("uniform",)
    ns: Sequence[int] = (400, 1600)
    runs: int = 100
    master_seed: int = 0
    m_eval: int = 1000
    split_fraction: float = 0.5
    kernel: KernelConfig = field(default_factory=KernelConfig)
    cv: CVConfig = field(default_factory=CVConfig)
    nuisance: NuisanceConfig = field(default_factory=NuisanceConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise DataError("runs must be >= 1")
        for m in self.measures:
            ReferenceMeasure.parse(m)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self), default=list))

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def cells(self) -> list[tuple[str, str, int]]:
        return [(f, ReferenceMeasure.parse(m).label, int(n)) for f in self.families for m in self.measures for n in self.ns]


def run_single(cfg: BenchmarkConfig, family: str, measure: str, n: int, run: int) -> list[RiskReport]:
    """Fit both estimators on one simulated dataset and score them."""
    mu = ReferenceMeasure.parse(measure)
    seed = cfg.master_seed
    data = generate(family, n, derive_seed(seed, "data", family, n, run))
    fit_seed = derive_seed(seed, "fit", family, mu.label, n, run)
    eval_seed = derive_seed(seed, "eval", family, mu.label, n, run)
    out = []
    for mode in (FUSED, NONFUSED):
        res = fit_cdrf(
            data, SCENARIO_FUSION, mode, mu, cfg.kernel, cfg.cv, cfg.nuisance, fit_seed, cfg.split_fraction
        )
        risk = empirical_risk_vs_truth(res.model, family, mu, cfg.m_eval, eval_seed)
        out.append(RiskReport(family, mu.label, n, run, METHODS[mode], risk))
    return out


def _run_task(args) -> tuple[tuple, list[RiskReport] | None, str | None]:
    cfg, key = args
    try:
        return key, run_single(cfg, *key), None
    except FusionError as exc:
        return key, None, f"{type(exc).__name__}: {exc}"


def _header_lines(cfg: BenchmarkConfig) -> list[str]:
    return [f"# config_hash={cfg.config_hash}", f"# master_seed={cfg.master_seed}"]


def read_results(path: Path, cfg: BenchmarkConfig) -> list[RiskReport]:
    if not path.exists():
        return []
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _header_lines(cfg)[0]:
        raise DataError(f"{path} was produced by a different configuration; refusing to resume")
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(body):
        rows.append(
            RiskReport(rec["scenario"], rec["ref_measure"], int(rec["n"]), int(rec["run"]), rec["method"], float(rec["risk"]))
        )
    return rows


def _fmt(r: RiskReport) -> list[str]:
    return [r.scenario, r.ref_measure, str(r.n), str(r.run), r.method, repr(float(r.risk))]


def write_results(path: Path, cfg: BenchmarkConfig, rows: Iterable[RiskReport]) -> None:
    ordered = sorted(rows, key=lambda r: (r.scenario, r.ref_measure, r.n, r.run, r.method))
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(cfg):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in ordered:
            w.writerow(_fmt(r))


def build_table(rows: Iterable[RiskReport]) -> list[TableRow]:
    cells: dict[tuple, dict[str, list[float]]] = {}
    for r in rows:
        cells.setdefault((r.scenario, r.ref_measure, r.n), {}).setdefault(r.method, []).append(r.risk)
    table = []
    for key in sorted(cells):
        fused = float(np.median(cells[key].get("fusion", [np.nan])))
        nonfused = float(np.median(cells[key].get("no_fusion", [np.nan])))
        pct = percent_reduction(fused, nonfused) if np.isfinite(fused) and nonfused > 0 else 0
        table.append(TableRow(*key, fused, nonfused, pct))
    return table


def write_table(path: Path, cfg: BenchmarkConfig, table: Sequence[TableRow]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(cfg):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for t in table:
            w.writerow([t.scenario, t.ref_measure, t.n, repr(t.fusion_median), repr(t.nofusion_median), t.pct_reduction])


def monte_carlo_benchmark(
    cfg: BenchmarkConfig,
    out_dir: str | Path | None = None,
    workers: int | None = None,
    max_new_runs: int | None = None,
) -> list[TableRow]:
    """Run every (cell, run) not yet present in ``out_dir/results.csv``.

    Completed runs are appended as they finish so an interrupted benchmark can
    be resumed; the final files are rewritten in sorted order, which makes them
    independent of scheduling. A failed run is skipped with a warning; once
    failures reach 5% of all runs the benchmark aborts. ``max_new_runs`` stops
    early (used to exercise resumption).
    """
    results_path = table_path = None
    done: list[RiskReport] = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        results_path = out / "results.csv"
        table_path = out / "table.csv"
        done = read_results(results_path, cfg)
        if not results_path.exists():
            write_results(results_path, cfg, [])
    have = {(r.scenario, r.ref_measure, r.n, r.run) for r in done}
    counts: dict[tuple, int] = {}
    for r in done:
        counts[(r.scenario, r.ref_measure, r.n, r.run)] = counts.get((r.scenario, r.ref_measure, r.n, r.run), 0) + 1
    have = {k for k in have if counts[k] == len(METHODS)}
    done = [r for r in done if (r.scenario, r.ref_measure, r.n, r.run) in have]

    todo = [(f, m, n, run) for (f, m, n) in cfg.cells() for run in range(cfg.runs) if (f, m, n, run) not in have]
    if max_new_runs is not None:
        todo = todo[:max_new_runs]
    total = len(cfg.cells()) * cfg.runs
    failures: list[tuple] = []
    new_rows: list[RiskReport] = []
    workers = workers or os.cpu_count() or 1

    def record(key, rows, err, fh):
        if rows is None:
            failures.append((key, err))
            log.warning("run %s failed: %s", key, err)
            if len(failures) >= MAX_FAILURE_RATE * total:
                raise FusionError(f"at least {MAX_FAILURE_RATE:.0%} of runs failed; last error: {err}")
            return
        new_rows.extend(rows)
        if fh is not None:
            w = csv.writer(fh, lineterminator="\n")
            for r in rows:
                w.writerow(_fmt(r))
            fh.flush()

    fh = results_path.open("a", newline="", encoding="utf-8") if results_path else None
    try:
        tasks = [(cfg, key) for key in todo]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for key, rows, err in pool.map(_run_task, tasks, chunksize=1):
                    record(key, rows, err, fh)
        else:
            for task in tasks:
                record(*_run_task(task), fh)
    finally:
        if fh is not None:
            fh.close()

    all_rows = done + new_rows
    table = build_table(all_rows)
    if results_path is not None:
        write_results(results_path, cfg, all_rows)
        write_table(table_path, cfg, table)
    return table


def curve_rows(model: FittedCDRF, family: str | None = None, points: int = 201) -> list[tuple[float, float | None, float]]:
    """``(a, theta0(a), theta_hat(a))`` on an evenly spaced grid over [0, 1]."""
    grid = np.linspace(0.0, 1.0, points)
    est = model.predict(grid)
    truth = true_cdrf(family, grid) if family else [None] * points
    return [(float(a), None if t is None else float(t), float(e)) for a, t, e in zip(grid, truth, est)]
