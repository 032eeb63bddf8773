"""Command-line interface.

Subcommands:
  simulate  draw covariate fields and a point pattern from one of the
            three generating processes
  fit       train a model on a pattern + covariate stack
  cv        cross-validated hyperparameter selection report
  predict   per-cell log-intensity of a saved model
  kfn       translation-corrected K statistic of a pattern
  bench     run a simulation-study scenario and write the summary CSV
  eval      score a saved model (test log-likelihood, IAE, k-fold CV)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import Scenario, run_scenario
from .errors import PPBoostError
from .geometry import QuadratureGrid, Window
from .metrics import iae, kfold_eval, test_poisson_loglik
from .secondorder import k_hat
from .simulate import (
    GrfSpec,
    calibrated_model,
    sample_covariates,
    sample_lgcp,
    sample_poisson,
    sample_thomas,
)
from .trainer import (
    CvGrid,
    Ensemble,
    FitConfig,
    cv_select,
    fit,
    predict_log_intensity,
)


def _window_arg(text: str) -> Window:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("window must be x_min,x_max,y_min,y_max")
    return Window(*vals)


def _float_set(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="draw covariates and a point pattern")
    p.add_argument("--process", choices=["poisson", "lgcp", "thomas"],
                   required=True)
    p.add_argument("--intensity",
                   choices=["loglinear2", "complex10", "nuisance2of10"],
                   default="loglinear2")
    p.add_argument("--covariates", type=int, choices=[2, 10], default=None,
                   help="number of covariate layers (default by intensity)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--tau2", type=float, default=1.0, help="lgcp noise variance")
    p.add_argument("--sigma", type=float, default=0.02,
                   help="lgcp noise range / thomas offspring spread")
    p.add_argument("--kappa", type=float, default=100.0,
                   help="thomas parent intensity")
    p.add_argument("--grid", type=int, default=64, help="cells per axis")
    p.add_argument("--field-knots", type=int, default=0,
                   help="simulate fields on a coarser lattice and "
                        "interpolate (0 = sample at grid resolution)")
    p.add_argument("--target-count", type=float, default=400.0,
                   help="expected number of events of the process")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-pattern", required=True)
    p.add_argument("--out-covariates", required=True)
    p.add_argument("--out-truth", default=None,
                   help="optional CSV of the generating mean intensity per cell")


def _run_simulate(args) -> int:
    import math

    window = Window.unit()
    grid = QuadratureGrid(window, args.grid, args.grid)
    n_cov = args.covariates
    if n_cov is None:
        n_cov = 2 if args.intensity == "loglinear2" else 10
    kind = "complex10" if args.intensity == "complex10" else "loglinear2"
    ss = np.random.SeedSequence(args.seed)
    s_cov, s_pat = ss.spawn(2)
    knots = args.field_knots if args.field_knots > 0 else None
    stack = sample_covariates(n_cov, grid, s_cov, knots=knots)

    target = args.target_count
    if args.process == "lgcp":
        det_target = target * math.exp(-args.tau2 / 2.0)
    elif args.process == "thomas":
        det_target = target / args.kappa
    else:
        det_target = target
    model = calibrated_model(kind, args.beta, stack, grid, det_target)
    lam_det = model.intensity(stack)

    if args.process == "poisson":
        pattern = sample_poisson(lam_det, grid, s_pat)
        lam_mean = lam_det
    elif args.process == "lgcp":
        pattern = sample_lgcp(model, GrfSpec(args.tau2, args.sigma), stack,
                              grid, s_pat)
        lam_mean = lam_det * math.exp(args.tau2 / 2.0)
    else:
        pattern = sample_thomas(args.kappa, args.sigma, lam_det, grid, s_pat)
        lam_mean = args.kappa * lam_det

    io.write_pattern_csv(pattern, args.out_pattern)
    io.write_covariates(stack, args.out_covariates)
    if args.out_truth:
        io.write_values_csv(lam_mean, args.out_truth)
    print(f"simulated {pattern.n} events -> {args.out_pattern}")
    return 0


def _add_fit(sub):
    p = sub.add_parser("fit", help="train a model")
    p.add_argument("--pattern", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--loss", choices=["p", "wp"], default="p")
    p.add_argument("--K", type=int, default=100, dest="iterations")
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--m", type=float, default=None,
                   help="K-function distance (weighted loss)")
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--parallel-trees", type=int, default=10)
    p.add_argument("--feature-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _load_inputs(pattern_path, covariates_path):
    stack = io.read_covariates(covariates_path)
    pattern = io.read_pattern_csv(pattern_path, stack.window)
    return pattern, stack, stack.grid()


def _fit_config(args, loss: str) -> FitConfig:
    return FitConfig(
        loss="weighted_poisson" if loss == "wp" else "poisson",
        n_iterations=args.iterations,
        gamma=args.gamma,
        eta=args.eta,
        m=getattr(args, "m", None),
        parallel_trees=args.parallel_trees,
        feature_fraction=args.feature_fraction,
        max_depth=args.depth,
        rng_seed=args.seed,
    )


def _run_fit(args) -> int:
    pattern, stack, grid = _load_inputs(args.pattern, args.covariates)
    model = fit(pattern, stack, grid, _fit_config(args, args.loss))
    model.save(args.out)
    print(f"fitted {model.n_iterations} iterations -> {args.out}")
    return 0


def _add_cv(sub):
    p = sub.add_parser("cv", help="cross-validated hyperparameter selection")
    p.add_argument("--pattern", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--loss", choices=["p", "wp"], default="p")
    p.add_argument("--K-max", type=int, default=200, dest="k_max")
    p.add_argument("--gamma-set", type=_float_set, default=(10.0, 30.0, 50.0))
    p.add_argument("--eta-set", type=_float_set, default=(0.1, 0.05))
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--parallel-trees", type=int, default=10)
    p.add_argument("--feature-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _run_cv(args) -> int:
    pattern, stack, grid = _load_inputs(args.pattern, args.covariates)
    args.iterations = args.k_max
    args.gamma, args.eta = args.gamma_set[0], args.eta_set[0]
    base = _fit_config(args, args.loss)
    grid_spec = CvGrid(k_max=args.k_max, gammas=args.gamma_set,
                       etas=args.eta_set)
    report = cv_select(pattern, stack, grid, base, grid_spec, args.seed)
    report.save(args.out)
    print(f"selected K={report.k} gamma={report.gamma} eta={report.eta} "
          f"(score {report.score:.2f}) -> {args.out}")
    return 0


def _add_predict(sub):
    p = sub.add_parser("predict", help="per-cell log-intensity of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--out", required=True)


def _run_predict(args) -> int:
    stack = io.read_covariates(args.covariates)
    model = Ensemble.load(args.model)
    values = predict_log_intensity(model, stack)
    io.write_values_csv(values, args.out)
    print(f"wrote {values.size} log-intensity values -> {args.out}")
    return 0


def _add_kfn(sub):
    p = sub.add_parser("kfn", help="K statistic with translation correction")
    p.add_argument("--pattern", required=True)
    p.add_argument("--intensity", required=True,
                   help="CSV of fitted intensity per event (pattern order)")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--window", type=_window_arg, default=Window.unit(),
                   help="x_min,x_max,y_min,y_max (default unit square)")
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")


def _run_kfn(args) -> int:
    pattern = io.read_pattern_csv(args.pattern, args.window)
    lam = io.read_values_csv(args.intensity)
    estimate = k_hat(pattern, lam, args.m)
    payload = {
        "m": estimate.m,
        "k_hat": estimate.k_hat,
        "pi_m2": estimate.pi_m2,
        "excess": estimate.excess,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _add_bench(sub):
    p = sub.add_parser("bench", help="run a simulation-study scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--replicates", type=int, default=None,
                   help="override the scenario's replicate count")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario's master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="summary CSV path")


def _run_bench(args) -> int:
    from dataclasses import replace as dc_replace

    scenario = Scenario.load(args.scenario)
    if args.replicates is not None:
        scenario = dc_replace(scenario, replicates=args.replicates)
    if args.seed is not None:
        scenario = dc_replace(scenario, rng_seed=args.seed)
    result = run_scenario(scenario, n_jobs=args.jobs)
    result.write_csv(args.out)
    print(f"{len(result.records)} replicates ({len(result.failures)} failed) "
          f"-> {args.out}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="score a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--truth", default=None,
                   help="CSV of the true intensity per cell (for iae)")
    p.add_argument("--metrics", default="loglik",
                   help="comma list from {loglik,iae,kfold}")
    p.add_argument("--thin", type=float, default=1.0,
                   help="thinning factor for the loglik metric")
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--K", type=int, default=100, dest="iterations",
                   help="iterations for kfold refits")
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--parallel-trees", type=int, default=10)
    p.add_argument("--feature-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")


def _run_eval(args) -> int:
    pattern, stack, grid = _load_inputs(args.pattern, args.covariates)
    model = Ensemble.load(args.model)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    payload = {}
    if "loglik" in wanted:
        lam_cells = np.exp(predict_log_intensity(model, stack))
        lam_events = (
            np.exp(predict_log_intensity(model, stack, pattern.points))
            if pattern.n
            else np.empty(0)
        )
        payload["loglik"] = test_poisson_loglik(lam_cells, lam_events, grid,
                                                args.thin)
    if "iae" in wanted:
        if not args.truth:
            raise PPBoostError("iae metric needs --truth")
        lam_true = io.read_values_csv(args.truth)
        lam_cells = np.exp(predict_log_intensity(model, stack))
        payload["iae"] = iae(lam_true, lam_cells, grid)
    if "kfold" in wanted:
        payload["kfold"] = kfold_eval(pattern, stack, grid,
                                      _fit_config(args, "p"),
                                      folds=args.folds, rng_seed=args.seed)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


_RUNNERS = {
    "simulate": _run_simulate,
    "fit": _run_fit,
    "cv": _run_cv,
    "predict": _run_predict,
    "kfn": _run_kfn,
    "bench": _run_bench,
    "eval": _run_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppboost",
        description="Boosted-tree intensity estimation for spatial point "
                    "processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_fit(sub)
    _add_cv(sub)
    _add_predict(sub)
    _add_kfn(sub)
    _add_bench(sub)
    _add_eval(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _RUNNERS[args.command](args)
    except PPBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
