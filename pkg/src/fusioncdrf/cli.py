"""Command-line entry point: ``fusioncdrf <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error (including
I/O), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, load_config, split_list, with_values
from .data import FUSED, MODES, NONFUSED, load_dataset, save_dataset
from .diagnostics import DiagnosticsInput, bound_ratio, lipschitz_constant, sup_on_grid, tail_constant
from .errors import ConfigError, DataError, FusionError
from .evaluation import (
    BenchmarkConfig,
    curve_rows,
    empirical_risk_vs_truth,
    monte_carlo_benchmark,
    read_results,
)
from .krr import FittedCDRF
from .pipeline import FitResult, fit_cdrf
from .simulation import FAMILIES, generate, oracle_nuisance

log = logging.getLogger("fusioncdrf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(ConfigError):
    pass


# -- helpers -------------------------------------------------------------------


def _header(cfg: RunConfig, seed: int | None = None) -> list[str]:
    return [f"config_hash={cfg.config_hash}", f"master_seed={cfg.seed if seed is None else seed}"]


def _write_csv(path: Path, header: Sequence[str], rows, comments: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r])
    return path


def _write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _csv_list(text: str, kind=str) -> tuple:
    try:
        items = tuple(kind(v) for v in split_list(text))
    except ValueError:
        raise UsageError(f"could not parse list {text!r}") from None
    if not items:
        raise UsageError("empty list")
    return items


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None) or ())
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["run__seed"] = int(args.seed)
    if getattr(args, "mu", None) is not None:
        changes["run__mu"] = args.mu
    return with_values(cfg, **changes) if changes else cfg


# -- commands --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    cfg = _config(args)
    data = generate(args.family, args.n, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(data, out, _header(cfg) + [f"family={args.family}", f"n={args.n}"])
    sidecar = {
        "family": args.family,
        "seed": cfg.seed,
        "n": args.n,
        "config_hash": cfg.config_hash,
        "dataset_sha256": _file_hash(out),
        "fusion": cfg.fusion.to_dict(),
    }
    _write_json(out.with_suffix(".json"), sidecar)
    print(f"wrote {out} ({args.n} rows)")
    return EXIT_OK


def _modes(arg: str | None, cfg: RunConfig) -> tuple[str, ...]:
    if arg is None:
        return (cfg.mode,)
    if arg == "both":
        return (FUSED, NONFUSED)
    if arg not in MODES:
        raise UsageError(f"--mode must be fused, nonfused or both, got {arg!r}")
    return (arg,)


def _fit(args, cfg: RunConfig, mode: str) -> FitResult:
    data = load_dataset(args.data)
    return fit_cdrf(
        data, cfg.fusion, mode, cfg.mu, cfg.kernel, cfg.cv, cfg.nuisance, cfg.seed, cfg.split_fraction
    )


def _write_cv(res: FitResult, out: Path, mode: str, comments: list[str]) -> None:
    from .plots import plot_cv

    rows = [(r["lambda"], r["fold"], r["risk"]) for r in res.cv.to_rows()]
    _write_csv(out / f"cv_{mode}.csv", ["lambda", "fold", "risk"], rows, comments)
    plot_cv(res.cv.lambda_grid, res.cv.risks, res.cv.chosen_lambda, out / f"cv_{mode}.png", " ".join(comments))


def cmd_fit(args) -> int:
    from .plots import plot_curve

    cfg = _config(args)
    out = Path(args.out)
    data_hash = _file_hash(Path(args.data)) if Path(args.data).exists() else None
    for mode in _modes(args.mode, cfg):
        res = _fit(args, cfg, mode)
        comments = _header(cfg) + [f"dataset_sha256={data_hash}", f"mode={mode}"]
        doc = res.to_dict()
        doc.update(
            {
                "config_hash": cfg.config_hash,
                "config": cfg.to_dict(),
                "dataset": str(args.data),
                "dataset_sha256": data_hash,
                "reference_measure": cfg.mu.label,
            }
        )
        _write_json(out / f"fit_{mode}.json", doc)
        _write_cv(res, out, mode, comments)
        curve = curve_rows(res.model, args.family)
        _write_csv(out / f"curve_{mode}.csv", ["a", "theta_true", "theta_hat"], curve, comments)
        plot_curve(curve, out / f"curve_{mode}.png", title=f"{mode} estimate", note=" ".join(comments))
        print(f"{mode}: lambda={res.cv.chosen_lambda:g} -> {out / f'fit_{mode}.json'}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    data_hash = _file_hash(Path(args.data)) if Path(args.data).exists() else None
    for mode in _modes(args.mode, cfg):
        res = _fit(args, cfg, mode)
        _write_cv(res, out, mode, _header(cfg) + [f"dataset_sha256={data_hash}", f"mode={mode}"])
        means = ", ".join(f"{lam:g}:{r:.4g}" for lam, r in zip(res.cv.lambda_grid, res.cv.mean_risks))
        print(f"{mode}: chosen lambda={res.cv.chosen_lambda:g} (mean risks {means})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    try:
        doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {args.model}: {exc}") from None
    model = FittedCDRF.from_dict(doc.get("model", doc))
    risk = empirical_risk_vs_truth(model, args.family, cfg.mu, args.m_eval, cfg.seed)
    result = {
        "model": str(args.model),
        "family": args.family,
        "reference_measure": cfg.mu.label,
        "m_eval": args.m_eval,
        "seed": cfg.seed,
        "risk": risk,
        "config_hash": cfg.config_hash,
    }
    if args.out:
        _write_json(Path(args.out), result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .plots import plot_benchmark

    cfg = _config(args)
    runs = cfg.runs if args.runs is None else args.runs
    if runs < 1:
        raise UsageError("--runs must be >= 1")
    bench = BenchmarkConfig(
        families=args.family or cfg.families,
        measures=args.measures or cfg.measures,
        ns=args.ns or cfg.ns,
        runs=runs,
        master_seed=cfg.seed,
        m_eval=cfg.m_eval,
        split_fraction=cfg.split_fraction,
        kernel=cfg.kernel,
        cv=cfg.cv,
        nuisance=cfg.nuisance,
    )
    for fam in bench.families:
        if fam not in FAMILIES:
            raise UsageError(f"unknown family {fam!r}")
    out = Path(args.out)
    table = monte_carlo_benchmark(bench, out, workers=args.workers, max_new_runs=args.max_new_runs)
    rows = read_results(out / "results.csv", bench)
    if rows:
        plot_benchmark(rows, out / "risk_vs_n.png", f"config_hash={bench.config_hash} master_seed={bench.master_seed}")
    for t in table:
        print(
            f"{t.scenario:>13} {t.ref_measure:>10} n={t.n:<5} fusion={t.fusion_median:.4g} "
            f"no_fusion={t.nofusion_median:.4g} reduction={t.pct_reduction}%"
        )
    return EXIT_OK


def cmd_diagnostics(args) -> int:
    cfg = _config(args)
    if args.oracle:
        fused = oracle_nuisance(args.oracle, cfg.mu, FUSED, seed=cfg.seed)
        nonfused = oracle_nuisance(args.oracle, cfg.mu, NONFUSED, seed=cfg.seed)
        xi, eta, w_sup = fused.xi, fused.eta, sup_on_grid(fused.ratio)
        xi_u, eta_u, w_sup_u = nonfused.xi, nonfused.eta, sup_on_grid(nonfused.ratio)
    else:
        missing = [n for n in ("xi", "eta", "w_sup", "xi_u", "eta_u", "w_sup_u") if getattr(args, n) is None]
        if missing:
            raise UsageError("without --oracle, give " + ", ".join("--" + m.replace("_", "-") for m in missing))
        xi, eta, w_sup = args.xi, args.eta, args.w_sup
        xi_u, eta_u, w_sup_u = args.xi_u, args.eta_u, args.w_sup_u
    inp = DiagnosticsInput(args.delta, args.sigma, args.L, xi, eta, w_sup, xi_u, eta_u, w_sup_u, args.p, args.alpha)
    result = {
        "input": inp.__dict__,
        "tail_constant": tail_constant(args.delta, args.sigma, args.L),
        "lipschitz_fused": lipschitz_constant(args.delta, args.sigma, args.L, xi, eta, w_sup),
        "lipschitz_nonfused": lipschitz_constant(args.delta, args.sigma, args.L, xi_u, eta_u, w_sup_u),
        "bound_ratio": bound_ratio(inp),
        "config_hash": cfg.config_hash,
        "master_seed": cfg.seed,
    }
    if args.out:
        _write_json(Path(args.out), result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (INI sections per module)")
    common.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key (repeatable)"
    )
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--mu", help="reference measure, e.g. uniform or beta(5,5) (overrides run.mu)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fusioncdrf", description="Dose-response curve estimation with data fusion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a simulated dataset")
    s.add_argument("--family", required=True, choices=FAMILIES)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    for name, func, text in (("fit", cmd_fit, "fit the curve"), ("cv", cmd_cv, "cross-validate the ridge penalty")):
        f = sub.add_parser(name, parents=[common], help=text)
        f.add_argument("--data", required=True)
        f.add_argument("--mode", help="fused, nonfused or both (default: run.mode)")
        f.add_argument("--out", required=True, help="output directory")
        if name == "fit":
            f.add_argument("--family", choices=FAMILIES, help="simulation family, to include the true curve")
        f.set_defaults(func=func)

    e = sub.add_parser("evaluate", parents=[common], help="risk of a fitted model against a true curve")
    e.add_argument("--model", required=True, help="fit_*.json written by 'fit'")
    e.add_argument("--family", required=True, choices=FAMILIES)
    e.add_argument("--m-eval", type=int, default=1000)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", parents=[common], help="fusion vs. no-fusion Monte Carlo benchmark")
    b.add_argument("--family", type=lambda t: _csv_list(t), help="comma-separated families")
    b.add_argument("--measures", type=lambda t: _csv_list(t), help="comma-separated reference measures")
    b.add_argument("--ns", type=lambda t: _csv_list(t, int), help="comma-separated sample sizes")
    b.add_argument("--runs", type=int)
    b.add_argument("--workers", type=int, default=None, help="worker processes (default: logical cores)")
    b.add_argument("--max-new-runs", type=int, default=None, help=argparse.SUPPRESS)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_benchmark)

    d = sub.add_parser("diagnostics", parents=[common], help="Lipschitz constants and the bound ratio")
    d.add_argument("--delta", type=float, required=True)
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument("--L", type=float, required=True, help="sub-exponential tail parameter")
    d.add_argument("--p", type=float, required=True)
    d.add_argument("--alpha", type=float, required=True)
    for name in ("xi", "eta", "w-sup", "xi-u", "eta-u", "w-sup-u"):
        d.add_argument(f"--{name}", type=float)
    d.add_argument("--oracle", choices=FAMILIES, help="take xi, eta and sup w from the simulation oracle")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnostics)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fusioncdrf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FusionError as exc:
        print(f"fusioncdrf {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fusioncdrf {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
