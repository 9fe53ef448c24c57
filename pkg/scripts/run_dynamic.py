"""Abrupt subspace changes: four rank-5 blocks of 100 x 100 x 250 in series.

Reports, per change point, the pre-change steady residual and how many slices
each tracker needs to get back below three times that level.
"""

import argparse

from olstec.experiments import dynamic_run, recovery_after_changes, tuned_sgd_eta

CHANGES = (250, 500, 750)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rho", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--within", type=int, default=100)
    args = ap.parse_args()

    eta = tuned_sgd_eta(args.rho)
    for seed in range(args.seeds):
        res = dynamic_run(seed, rho=args.rho, eta=eta)
        for algo, trace in res.items():
            rec = recovery_after_changes(trace, CHANGES)
            desc = ", ".join(f"t={r.change}: steady {r.steady:.1e}, back after {r.first_below}" for r in rec)
            print(f"seed {seed} {algo:6s} {desc}")


if __name__ == "__main__":
    main()
