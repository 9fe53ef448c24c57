"""Per-slice runtime against |Omega| R^2 + (L+W) R^3 and state memory against (L+W) R^2."""

from olstec.bench import bench, fit_ratio


def main():
    rows = bench(Ls=(100, 200), ranks=(5, 10, 15), rhos=(0.05, 0.1, 0.2), reps=5)
    ratios = fit_ratio(rows)
    print(f"{'L':>4} {'R':>3} {'rho':>5} {'ms/slice':>9} {'ms/cost':>10} {'bytes/(L+W)R^2':>15}")
    for r, q in zip(rows, ratios):
        print(f"{r.L:4d} {r.rank:3d} {r.rho:5.2f} {r.median_ms:9.3f} {q:10.3e} {r.traced_bytes / ((r.L + r.W) * r.rank**2):15.2f}")


if __name__ == "__main__":
    main()
