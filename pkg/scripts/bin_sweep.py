"""Calibration vs test cross entropy as the number of bins grows, on synthetic data.

Writes one sweep CSV per class count and prints where each method's test
cross entropy bottoms out against where it ends.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

from isocal.core import synth_simplex
from isocal.sweep import SweepConfig, run_sweep, write_rows


@dataclass
class Experiment:
    n_calib: int = 2000
    n_test: int = 10_000
    noise: float = 0.3
    seed: int = 0
    overfit_factor: int = 4
    roc: bool = False
    out_dir: Path = Path("results")


def sweep_one(K: int, exp: Experiment) -> list[dict]:
    calib = synth_simplex(exp.n_calib, K, exp.noise, exp.seed)
    test = synth_simplex(exp.n_test, K, exp.noise, exp.seed + 1)
    methods = ("mc-irp", "fixed-bins") if K == 2 else ("mc-irp",)
    rows = run_sweep(calib, test, SweepConfig(methods=methods, roc=exp.roc, seed=exp.seed))
    leaves = max(r["n_bins"] for r in rows if r["method"] == "mc-irp")
    cap = exp.overfit_factor * leaves + K - 2
    rows += run_sweep(calib, test, SweepConfig(methods=("recursive-bins",), max_leaves=cap, roc=exp.roc,
                                               seed=exp.seed))
    return rows


def summarize(rows: list[dict]) -> None:
    for method in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == method]
        best = min(mine, key=lambda r: r["test_ce"])
        last = mine[-1]
        print(f"  {method:15s} best test CE {best['test_ce']:.4f} at {best['n_bins']:4d} bins, "
              f"final {last['test_ce']:.4f} at {last['n_bins']:4d} bins")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.3)
    ap.add_argument("--roc", action="store_true", help="also compute AUC / VUS columns (slower)")
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    args = ap.parse_args()
    exp = Experiment(noise=args.noise, seed=args.seed, roc=args.roc, out_dir=args.out_dir)
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    for K in (2, 3):
        rows = sweep_one(K, exp)
        path = exp.out_dir / f"sweep_K{K}_seed{exp.seed}.csv"
        write_rows(rows, path)
        print(f"K={K}: {len(rows)} rows -> {path}")
        summarize(rows)


if __name__ == "__main__":
    main()
