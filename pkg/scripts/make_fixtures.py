"""Regenerate the regression fixtures under tests/fixtures/.

Run from the repository root: ``python scripts/make_fixtures.py``.
"""

from pathlib import Path

from olstec.cli import main

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def build(outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    stream = outdir / "small_stream.bin"
    main(["synth", "--mode", "stationary", "--L", "12", "--W", "10", "--T", "25", "--rank", "2",
          "--rho", "0.4", "--noise", "1e-3", "--seed", "3", "-o", str(stream)])
    main(["track", "--algo", "olstec", "--rank", "2", "--input", str(stream), "--runs", "5", "--seed", "0",
          "--no-wall-clock", "--metrics-out", str(outdir / "metrics_runs5.csv"),
          "--summary-out", str(outdir / "summary_runs5.csv")])


if __name__ == "__main__":
    build(FIX)
    print(f"fixtures written to {FIX}")
