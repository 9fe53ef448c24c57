"""Stationary-subspace comparison of OLSTEC and the SGD baseline.

Prints the running-average error at T (mean +/- std over seeds) and the
first slice where OLSTEC's normalized residual drops below 1e-2.

    python scripts/run_stationary.py --rho 0.1 --seeds 5 --csv out.csv
"""

import argparse

import numpy as np

from olstec.experiments import first_below, stationary_run, tuned_sgd_eta
from olstec.metrics import prefix_means


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rho", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--csv", help="write per-slice mean/std residuals here")
    args = ap.parse_args()

    eta = tuned_sgd_eta(args.rho)
    print(f"rho={args.rho}  sgd eta (held-out tuning) = {eta}")
    traces = {"olstec": [], "sgd": []}
    for seed in range(args.seeds):
        res = stationary_run(seed, rho=args.rho, eta=eta)
        for k, v in res.items():
            traces[k].append(v)
        print(f"seed {seed}: olstec <1e-2 at slice {first_below(res['olstec'], 1e-2)}, "
              f"running avg olstec {prefix_means(res['olstec'])[-1]:.3e}  sgd {prefix_means(res['sgd'])[-1]:.3e}")
    for k, runs in traces.items():
        ra = np.array([prefix_means(r)[-1] for r in runs])
        print(f"{k:7s} running-average error at T: {ra.mean():.3e} +/- {ra.std(ddof=1) if len(ra) > 1 else 0:.3e}")
    if args.csv:
        cols = []
        for k, runs in traces.items():
            arr = np.array(runs)
            cols += [arr.mean(0), arr.std(0)]
        np.savetxt(args.csv, np.column_stack([np.arange(len(cols[0]))] + cols), delimiter=",", fmt="%.17g",
                   header="t,olstec_mean,olstec_std,sgd_mean,sgd_std", comments="")


if __name__ == "__main__":
    main()
