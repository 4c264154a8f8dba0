"""Command-line entry point.

Every command is deterministic given its inputs, flags, and seed, and
writes a manifest recording all resolved settings next to its outputs.
Exit codes: 0 success, 2 usage, 3 data error, 4 convergence diagnostics.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, ingestion, simulation
from .estimation import FitConfig, FitResult, OptimizerConfig, StratificationError, fit
from .ingestion import DataError

logger = logging.getLogger("degindex")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

BENCHMARK_METHODS = ("DI-VS", "DI-NVS", "DI-VSL")


def _write_manifest(outdir: Path, command: str, settings: dict):
    payload = {"command": command, "settings": settings, "package_version": "0.1.0"}
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=1, default=str)


def _load_dataset(path: str):
    units, manifest = ingestion.load_long_csv(path)
    return units, manifest


def _apply_config_file(args: argparse.Namespace):
    """Values in --config override command-line flags."""
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, val in overrides.items():
            if not hasattr(args, key):
                raise DataError(f"config file: unknown setting {key!r}")
            setattr(args, key, val)
    return args


def _fit_config_from_args(args) -> FitConfig:
    grid = None
    if getattr(args, "lambda_grid", None):
        grid = tuple(float(v) for v in str(args.lambda_grid).split(","))
    if getattr(args, "no_selection", False):
        grid = (0.0,)
    return FitConfig(
        alpha=args.alpha,
        lambda_grid=grid,
        folds=args.folds,
        seed=args.seed,
        n_interior_knots=args.knots,
        optimizer=OptimizerConfig(
            max_evals_per_dim=args.max_evals_per_dim,
            restarts=args.restarts,
            xtol=args.xtol,
            ftol=args.ftol,
        ),
        cv_budget_factor=args.cv_budget_factor,
    )


def cmd_simulate(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = simulation.ScenarioSpec(scenario=args.scenario, n=args.n, seed=args.seed,
                                   horizon=args.horizon)
    ds = simulation.generate_dataset(spec)
    data_path = outdir / "data.csv"
    ingestion.write_long_csv(ds.units, data_path)
    _write_manifest(outdir, "simulate", {
        "scenario": spec.scenario, "n": spec.n, "seed": spec.seed,
        "horizon": spec.horizon, "alpha": spec.alpha,
        "weibull": list(spec.weibull_params),
        "failed_fraction": ds.failed_fraction,
        "data": str(data_path),
    })
    print(f"wrote {data_path} ({len(ds.units)} units, "
          f"{100 * ds.failed_fraction:.0f}% failed)")
    return 0


def cmd_fit(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    units, data_manifest = _load_dataset(args.data)
    config = _fit_config_from_args(args)
    result = fit(units, config, linear=args.linear)

    model_path = outdir / "model.json"
    result.save(model_path)
    with open(outdir / "cv_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "lambda", "fnr", "fpr", "ter"])
        for stage, table in result.cv_tables.items():
            for row in table:
                writer.writerow([stage, row["lambda"], row["fnr"], row["fpr"], row["ter"]])
    with open(outdir / "diagnostics.json", "w") as fh:
        json.dump(result.diagnostics, fh, indent=1)
    with open(outdir / "trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "cycle", "u"])
        for unit in units:
            times, u = result.trajectory(unit)
            for t, v in zip(times, u):
                writer.writerow([unit.unit_id, t, v])
    _write_manifest(outdir, "fit", {
        "data": str(args.data), "data_manifest": data_manifest.to_dict(),
        "linear": args.linear, "no_selection": args.no_selection,
        "fit_config": dataclasses.asdict(config),
        "lambda_selected": result.lambda_selected,
        "sigma_hat": result.sigma,
        "selected_sensors": result.selected_sensors,
    })
    print(f"wrote {model_path} (lambda={result.lambda_selected:g}, "
          f"sigma={result.sigma:.4g}, selected={result.selected_sensors})")
    if result.diagnostics.get("warnings"):
        for w in result.diagnostics["warnings"]:
            logger.warning(w)
        return EXIT_CONVERGENCE if args.strict_convergence else 0
    return 0


def cmd_predict(args) -> int:
    model = FitResult.load(args.model)
    units, _ = _load_dataset(args.data)
    threshold = evaluation.practical_threshold(model.alpha, model.sigma, args.quantile)
    report = evaluation.classify(units, model, threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "u_at_end", "predicted_status", "true_status"])
        for uid, u, p, t in zip(report.unit_ids, report.u_at_end,
                                report.predicted_status, report.true_status):
            writer.writerow([uid, repr(float(u)), int(p), int(t)])
    print(f"wrote {out} (threshold={threshold:.4f}, "
          f"FNR={report.fnr:.3f}, FPR={report.fpr:.3f}, TER={report.ter:.3f})")
    return 0


def cmd_evaluate(args) -> int:
    with open(args.predictions, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError("empty predictions file")
    pred = np.asarray([int(r["predicted_status"]) for r in rows])
    truth = np.asarray([int(r["true_status"]) for r in rows])
    n_failed = int((truth == 1).sum())
    n_cens = int((truth == 0).sum())
    fn = int(((truth == 1) & (pred == 0)).sum())
    fp = int(((truth == 0) & (pred == 1)).sum())
    fnr = fn / n_failed if n_failed else 0.0
    fpr = fp / n_cens if n_cens else 0.0
    line = f"FNR={fnr:.6f} FPR={fpr:.6f} TER={fnr + fpr:.6f}"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fnr", "fpr", "ter"])
            writer.writerow([fnr, fpr, fnr + fpr])
    print(line)
    return 0


def cmd_ale(args) -> int:
    model = FitResult.load(args.model)
    units, _ = _load_dataset(args.data)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.sensor is not None:
        indices = [model.sensor_ids.index(args.sensor)]
    else:
        indices = [model.sensor_ids.index(s) for s in
                   (model.selected_sensors or model.sensor_ids)]
    written = []
    for idx in indices:
        curve = evaluation.ale_main_effect(model, units, idx, n_bins=args.bins)
        path = outdir / f"ale_sensor_{curve.sensor_id}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sensor", "x_standardized", "effect"])
            for x, e in zip(curve.grid, curve.effect):
                writer.writerow([curve.sensor_id, repr(float(x)), repr(float(e))])
        written.append(str(path))
    _write_manifest(outdir, "ale", {"model": str(args.model), "data": str(args.data),
                                    "bins": args.bins, "files": written})
    print(f"wrote {len(written)} ALE curve file(s) to {outdir}")
    return 0


def _benchmark_one(task):
    """One replicate: generate train/test data, fit one method, classify."""
    scenario, n, rep, method, base_seed, fit_kwargs = task
    seed = base_seed + 1000 * rep
    train = simulation.generate_dataset(simulation.ScenarioSpec(scenario, n=n, seed=seed))
    test = simulation.generate_dataset(
        simulation.ScenarioSpec(scenario, n=100, seed=seed + 500))

    config = FitConfig(seed=seed, **fit_kwargs)
    if method == "DI-NVS":
        config = dataclasses.replace(config, lambda_grid=(0.0,))
    result = fit(train.units, config, linear=(method == "DI-VSL"))
    threshold = evaluation.practical_threshold(result.alpha, result.sigma, 0.01)
    report = evaluation.classify(test.units, result, threshold)

    selected = set(result.selected_sensors)
    effective = set(range(1, 6))
    no_effect = set(range(6, 11))
    n_eff_kept = len(selected & effective)
    n_noeff_excluded = len(no_effect - selected)
    return {
        "scenario": scenario, "n": n, "replicate": rep, "method": method,
        "fnr": report.fnr, "fpr": report.fpr, "ter": report.ter,
        "sigma_hat": result.sigma, "lambda_selected": result.lambda_selected,
        "n_selected": len(selected),
        "effective_kept": n_eff_kept,
        "no_effect_excluded": n_noeff_excluded,
        "correctly_specified": n_eff_kept + n_noeff_excluded,
    }


def run_benchmark(scenarios, n_list, replicates, methods, base_seed, fit_kwargs,
                  workers: int = 1):
    """Replicated method comparison; deterministic result ordering."""
    tasks = [(sc, n, rep, m, base_seed, fit_kwargs)
             for sc in scenarios for n in n_list for rep in range(replicates)
             for m in methods]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_benchmark_one, tasks))
    else:
        rows = [_benchmark_one(t) for t in tasks]
    rows.sort(key=lambda r: (r["scenario"], r["n"], r["method"], r["replicate"]))
    return rows


def summarize_benchmark(rows):
    keys = sorted({(r["scenario"], r["n"], r["method"]) for r in rows})
    summary = []
    for sc, n, m in keys:
        cell = [r for r in rows if (r["scenario"], r["n"], r["method"]) == (sc, n, m)]
        summary.append({
            "scenario": sc, "n": n, "method": m, "replicates": len(cell),
            "mean_fnr": float(np.mean([r["fnr"] for r in cell])),
            "mean_fpr": float(np.mean([r["fpr"] for r in cell])),
            "mean_ter": float(np.mean([r["ter"] for r in cell])),
            "mean_effective_kept": float(np.mean([r["effective_kept"] for r in cell])),
            "mean_no_effect_excluded": float(np.mean([r["no_effect_excluded"] for r in cell])),
            "mean_correctly_specified": float(np.mean([r["correctly_specified"] for r in cell])),
        })
    return summary


def cmd_benchmark(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scenarios = args.scenarios.split(",")
    n_list = [int(v) for v in args.n_list.split(",")]
    methods = args.methods.split(",")
    for m in methods:
        if m not in BENCHMARK_METHODS:
            raise DataError(f"unknown method {m!r}; choose from {BENCHMARK_METHODS}")
    workers = int(os.environ.get("DEGINDEX_WORKERS", args.workers))
    fit_kwargs = {
        "folds": args.folds,
        "lambda_grid": tuple(float(v) for v in args.lambda_grid.split(","))
        if args.lambda_grid else None,
        "optimizer": OptimizerConfig(max_evals_per_dim=args.max_evals_per_dim,
                                     restarts=args.restarts, xtol=args.xtol,
                                     ftol=args.ftol),
        "cv_budget_factor": args.cv_budget_factor,
    }
    rows = run_benchmark(scenarios, n_list, args.replicates, methods, args.seed,
                         fit_kwargs, workers=workers)
    audit_path = outdir / "benchmark_audit.csv"
    with open(audit_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    summary = summarize_benchmark(rows)
    summary_path = outdir / "benchmark_summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0].keys()))
        writer.writeheader()
        writer.writerows(summary)
    _write_manifest(outdir, "benchmark", {
        "scenarios": scenarios, "n_list": n_list, "replicates": args.replicates,
        "methods": methods, "seed": args.seed, "workers": workers,
        "fit_settings": {k: dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
                         for k, v in fit_kwargs.items()},
    })
    for row in summary:
        print(f"{row['scenario']} n={row['n']} {row['method']}: "
              f"FNR={row['mean_fnr']:.3f} FPR={row['mean_fpr']:.3f} "
              f"TER={row['mean_ter']:.3f} "
              f"correct_vars={row['mean_correctly_specified']:.1f}")
    return 0


def _add_fit_flags(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, default=float(np.exp(5.0)))
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--knots", type=int, default=2, help="interior knots per sensor")
    p.add_argument("--lambda-grid", dest="lambda_grid", default=None,
                   help="comma-separated values; default is an n-scaled grid")
    p.add_argument("--max-evals-per-dim", dest="max_evals_per_dim", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--xtol", type=float, default=1e-4)
    p.add_argument("--ftol", type=float, default=1e-6)
    p.add_argument("--cv-budget-factor", dest="cv_budget_factor", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON file whose settings override the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degindex",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    p.add_argument("--scenario", required=True, choices=sorted(simulation.SCENARIO_BETA))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=simulation.HORIZON)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the degradation-index model")
    p.add_argument("--data", required=True, help="long CSV dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--no-selection", dest="no_selection", action="store_true",
                   help="lambda grid {0}: no-selection baseline (DI-NVS)")
    p.add_argument("--linear", action="store_true",
                   help="linear sensor effects with adaptive LASSO (DI-VSL)")
    p.add_argument("--strict-convergence", dest="strict_convergence",
                   action="store_true",
                   help="exit nonzero when the optimizer hits its budget")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="classify units with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--quantile", type=float, default=0.01,
                   help="practical-threshold quantile")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error rates from a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ale", help="accumulated-local-effects curves")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sensor", type=int, default=None, help="sensor id; default all retained")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_ale)

    p = sub.add_parser("benchmark", help="replicated method-comparison study")
    p.add_argument("--scenarios", default="A")
    p.add_argument("--n-list", dest="n_list", default="100")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--methods", default=",".join(BENCHMARK_METHODS))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config_file(args)
        return args.func(args)
    except DataError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except StratificationError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (ValueError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
