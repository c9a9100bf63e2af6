"""Command-line entry point: ``isocal {fit,apply,eval,sweep,synth,roc}``.

Exit codes: 0 success, 2 invalid input, 3 method or class-count mismatch,
4 a fitted model failed one of its own guarantees.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import Dataset, DataError, corner_thresholds, load_csv, read_matrix_csv, save_csv, synth_simplex, write_matrix_csv
from .metrics import MetricsReport, cross_entropy, ece_binned, ece_discrete, group_penalty, is_discrete
from .partition import SimplexPartitionModel, fit_fixed_bins, fit_mc_irp, fit_recursive_bins
from .pav import IsotonicModel, pav_fit
from .roc import auc, default_threshold_grid, lattice_thresholds, roc_surface, sroc_curve, unique_rows, vus
from .serialize import METHODS, calibrate, load_model, model_K, save_model
from .sweep import SweepConfig, regularized_ce, run_sweep, write_rows

EXIT_INPUT, EXIT_MISMATCH, EXIT_INVARIANT = 2, 3, 4
ZERO_ECE_TOL = 1e-9


class MismatchError(Exception):
    pass


class InvariantError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("ISOCAL_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"ISOCAL_SEED must be an integer, got {raw!r}") from None


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_forecasts(path) -> np.ndarray:
    """Forecast matrix from a dataset CSV or a bare ``p1..pK`` / ``r1..rK`` file."""
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
    if header and header[-1] in ("y", "w"):
        return load_csv(path).P
    prefix = header[0][:1] if header and header[0] else ""
    F = read_matrix_csv(path, prefix)
    if F.ndim != 2 or F.shape[1] < 2:
        raise DataError(f"{path}: need at least two forecast columns")
    if np.any(~np.isfinite(F)) or np.any(F < 0) or np.any(np.abs(F.sum(axis=1) - 1) > 1e-6):
        raise DataError(f"{path}: rows must be finite nonnegative vectors summing to 1")
    return F


def _require_binary(method: str, K: int) -> None:
    if method in ("pav", "fixed-bins") and K != 2:
        raise MismatchError(f"method {method} needs K=2 forecasts, input has K={K}")


def _fit(method: str, ds: Dataset, args):
    _require_binary(method, ds.K)
    if method == "pav":
        return pav_fit(ds.scores, ds.y.astype(float), ds.w)
    if method == "fixed-bins":
        return fit_fixed_bins(ds, args.bins, args.alpha)
    fit = fit_mc_irp if method == "mc-irp" else fit_recursive_bins
    return fit(ds, args.alpha, args.candidates, args.lattice_step, args.max_leaves)


def _n_bins(model) -> int:
    if isinstance(model, SimplexPartitionModel):
        return model.n_leaves
    return int(np.count_nonzero(model.counts))


def cmd_fit(args) -> None:
    ds = load_csv(args.input)
    model = _fit(args.method, ds, args)
    R = calibrate(model, ds.P)
    alpha = 0.0 if isinstance(model, IsotonicModel) else args.alpha
    ece = ece_discrete(R, ds.y, ds.w)
    if alpha == 0 and ece > ZERO_ECE_TOL:
        raise InvariantError(f"unsmoothed {args.method} fit has calibration error {ece:.3g} on its fit set")
    ce = cross_entropy(R, ds.y, weights=ds.w)
    summary = {
        "method": args.method,
        "K": ds.K,
        "n": ds.n,
        "alpha": alpha,
        "n_bins_or_leaves": _n_bins(model),
        "ece": ece,
        "cross_entropy": ce.value,
        "regularized_cross_entropy": regularized_ce(model, ds, R, alpha),
    }
    meta = {"n": ds.n, "seed": args.seed, "input": str(args.input)}
    if isinstance(model, SimplexPartitionModel):
        meta.update(candidates=args.candidates, lattice_step=args.lattice_step)
    save_model(model, args.output, meta)
    _emit({k: (str(v) if isinstance(v, float) and not np.isfinite(v) else v) for k, v in summary.items()})


def _load_model_for(path, K: int):
    model = load_model(path)
    if model_K(model) != K:
        raise MismatchError(f"model expects K={model_K(model)}, input has K={K}")
    return model


def cmd_apply(args) -> None:
    P = _load_forecasts(args.input)
    model = _load_model_for(args.model, P.shape[1])
    write_matrix_csv(args.output, calibrate(model, P), "r")


def cmd_eval(args) -> None:
    F = _load_forecasts(args.forecasts)
    ds = load_csv(args.labels_from)
    if F.shape[0] != ds.n:
        raise DataError(f"{args.forecasts} has {F.shape[0]} rows, {args.labels_from} has {ds.n}")
    if F.shape[1] != ds.K:
        raise MismatchError(f"forecasts have K={F.shape[1]}, labels file has K={ds.K}")
    model = _load_model_for(args.model, ds.K) if args.model else None
    discrete = is_discrete(F)
    if discrete:
        ece, kind = ece_discrete(F, ds.y, ds.w), "discrete"
        n_bins = int(np.unique(F, axis=0).shape[0])
    else:
        leaves = model if isinstance(model, SimplexPartitionModel) else None
        ece, kind = ece_binned(F, ds.y, args.bins, ds.w, leaves), "binned"
        n_bins = leaves.n_leaves if leaves is not None else args.bins
    ce = cross_entropy(F, ds.y, group_penalty(F, ds.w, args.alpha) if discrete else 0.0, ds.w)
    if ds.K == 2:
        score = auc(sroc_curve(F[:, 1], ds.y, ds.w))
    else:
        G = unique_rows(np.vstack([F, lattice_thresholds(ds.K, args.lattice_step)]))
        score = vus(roc_surface(F, ds.y, G, ds.w), args.vus_samples, args.seed)
    report = MetricsReport(ece, ce.value, ce.regularized, score, n_bins, ds.K, kind, ce.finite)
    print(report.to_json())


def _csv_list(text: str, cast=str) -> list:
    return [cast(t.strip()) for t in text.split(",") if t.strip()]


def cmd_sweep(args) -> None:
    calib, test = load_csv(args.calib), load_csv(args.test)
    if calib.K != test.K:
        raise MismatchError(f"calibration set has K={calib.K}, test set K={test.K}")
    methods = _csv_list(args.methods)
    for m in methods:
        if m not in ("mc-irp", "recursive-bins", "fixed-bins"):
            raise DataError(f"unknown sweep method {m!r}")
        _require_binary(m, calib.K)
    cfg = SweepConfig(
        methods=tuple(methods),
        alpha=args.alpha,
        max_leaves=args.max_leaves,
        bins_grid=tuple(_csv_list(args.bins_grid, int)),
        candidates=args.candidates,
        lattice_step=args.lattice_step,
        roc=not args.no_roc,
        vus_samples=args.vus_samples,
        roc_points=args.roc_points,
        seed=args.seed,
    )
    rows = run_sweep(calib, test, cfg)
    write_rows(rows, args.output)
    _emit({"rows": len(rows), "output": str(args.output)})


def cmd_synth(args) -> None:
    try:
        ds = synth_simplex(args.n, args.K, args.noise, args.seed)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    save_csv(ds, args.output)


def _model_thresholds(model, K: int) -> np.ndarray:
    if isinstance(model, SimplexPartitionModel):
        return model.introduced_thresholds()
    edges = model.boundaries[1:-1]
    return np.column_stack([1.0 - edges, edges]) if edges.size else np.empty((0, K))


def cmd_roc(args) -> None:
    ds = load_csv(args.input)
    model = _load_model_for(args.model, ds.K)
    introduced = _model_thresholds(model, ds.K)
    parts = [introduced]
    if not args.no_grid:
        parts.append(default_threshold_grid(ds, args.lattice_step))
    G = unique_rows(np.vstack(parts)) if sum(p.shape[0] for p in parts) else np.empty((0, ds.K))
    if G.shape[0] == 0:
        raise DataError("empty threshold set: the model introduced no splits and the grid is disabled")
    R = calibrate(model, ds.P)
    raw = roc_surface(ds.P, ds.y, np.vstack([G, corner_thresholds(ds.K)]), ds.w)
    cal = roc_surface(R, ds.y, G, ds.w)
    if isinstance(model, SimplexPartitionModel) and model.method == "mc-irp" and introduced.shape[0]:
        # the monotony guarantee covers the unsmoothed leaf means
        on_splits = roc_surface(model.apply_raw(ds.P), ds.y, introduced, ds.w).points
        gap = np.abs(on_splits[:, None, :] - raw.points[None, :, :]).max(axis=2).min(axis=1)
        if np.any(gap > 1e-9):
            raise InvariantError("calibrated ROC point on an introduced split is not a raw ROC point")
    raw.to_csv(args.raw_output)
    cal.to_csv(args.calibrated_output)
    _emit({"thresholds": int(G.shape[0]), "raw_points": len(raw), "calibrated_points": len(cal)})


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    parser = argparse.ArgumentParser(prog="isocal", description="Isotonic calibration of probabilistic forecasts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def tree_opts(p):
        p.add_argument("--alpha", type=float, default=1.0, help="Laplace smoothing strength")
        p.add_argument("--max-leaves", type=int, default=None)
        p.add_argument("--candidates", choices=("points", "lattice", "both"), default="points")
        p.add_argument("--lattice-step", type=float, default=0.1)
        p.add_argument("--seed", type=int, default=seed)

    p = sub.add_parser("fit", help="fit a calibrator and save it as JSON")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bins", type=int, default=15, help="bin count for fixed-bins")
    tree_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("apply", help="calibrate forecasts with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="calibration error, cross entropy and AUC/VUS of forecasts")
    p.add_argument("--forecasts", required=True)
    p.add_argument("--labels-from", required=True)
    p.add_argument("--model", default=None, help="partition model whose leaves bin continuous forecasts")
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--alpha", type=float, default=0.0, help="penalty for the regularized cross entropy")
    p.add_argument("--vus-samples", type=int, default=100_000)
    p.add_argument("--lattice-step", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="metrics as a function of the number of bins")
    p.add_argument("--methods", default="mc-irp,recursive-bins,fixed-bins")
    p.add_argument("--calib", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--bins-grid", default="1,2,3,5,8,10,15,20,30,50,100")
    p.add_argument("--vus-samples", type=int, default=20_000)
    p.add_argument("--roc-points", type=int, default=500, help="calibration forecasts used as VUS thresholds")
    p.add_argument("--no-roc", action="store_true")
    p.add_argument("--output", required=True)
    tree_opts(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="synthetic forecasts with noisy argmax labels")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("roc", help="raw and calibrated ROC points over the model's splits plus a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--raw-output", required=True)
    p.add_argument("--calibrated-output", required=True)
    p.add_argument("--lattice-step", type=float, default=0.1)
    p.add_argument("--no-grid", action="store_true")
    p.set_defaults(func=cmd_roc)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())
