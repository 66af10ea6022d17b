"""Fitted log-log RMSE slopes for several test functions.

For each test function, sweeps n over a geometric grid and fits the
slope of log RMSE against log n. The Gaussian limit predicts -1/2 once
the bias terms are knocked out by aggregation.

    python3 scripts/rate_slopes.py --model identity:20 --m 3 \
        --n-list 500,1000,2000,4000 --reps 500
"""

import argparse

from spectrace import ExperimentConfig, rate_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="identity:20")
    ap.add_argument("--functions", default="identity,log1p,square")
    ap.add_argument("--mode", default="aggregate")
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--n-list", default="500,1000,2000,4000")
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=21)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    n_values = tuple(int(v) for v in args.n_list.split(","))
    print(f"model {args.model}, mode {args.mode}, n in {n_values}, "
          f"{args.reps} replications per point")
    print(f"{'f':>12} {'slope':>9} {'se':>8}  rmse per n")
    for name in args.functions.split(","):
        sweep = rate_sweep(ExperimentConfig(
            model=args.model, f=name, seed=args.seed, mode=args.mode,
            n_list=n_values, m=args.m, replications=args.reps,
            workers=args.workers,
        ))
        rmse = " ".join(f"{v:.4g}" for v in sweep.rmse)
        print(f"{name:>12} {sweep.slope:>9.4f} {sweep.slope_se:>8.4f}  {rmse}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
