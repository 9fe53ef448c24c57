"""Command line entry point: ``olstec synth|track|ingest|bench``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 file or
format error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from olstec import __version__
from olstec.baselines import BatchProblem, SgdTracker, batch_als
from olstec.bench import bench
from olstec.core import FactorModel, MaskedSlice, StreamSource, TrackerParams, reconstruct_slice
from olstec.errors import NumericalError, OlstecError, StreamFormatError, StructuralError
from olstec.metrics import MetricRecord, resolve_reference, slice_error, summarize_runs, track_stream
from olstec.stream_io import (
    VERSION,
    ingest_frames,
    open_writer,
    read_stream,
    write_metrics_csv,
    write_stream,
    write_summary_csv,
)
from olstec.streams import RNG_VERSION, ScenarioSpec, generate
from olstec.tracker import OlstecTracker

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("olstec")


class UsageError(Exception):
    pass


def _segments(text, T):
    if not text:
        return [(T // 4, True)] * 4 if T % 4 == 0 else [(T, True)]
    return [(int(n), True) for n in text.split(",")]


def cmd_synth(args):
    spec = ScenarioSpec(
        mode=args.mode, L=args.L, W=args.W, T=args.T, rank=args.rank, noise=args.noise, rho=args.rho,
        segments=_segments(args.segments, args.T) if args.mode == "dynamic" else [],
        drift_window=(args.drift_start, args.drift_length), fixed_mask=args.fixed_mask, seed=args.seed,
    )
    stream = generate(spec)
    write_stream(args.output, stream, truth=not args.no_truth)
    log.info("wrote %d slices of %dx%d to %s", len(stream), spec.L, spec.W, args.output)
    return EXIT_OK


def cmd_ingest(args):
    shape = tuple(int(x) for x in args.raw_shape.split("x")) if args.raw_shape else None
    stream = ingest_frames(args.frames, args.rho, seed=args.seed, raw_shape=shape)
    write_stream(args.output, stream)
    return EXIT_OK


def _make_tracker(args, stream, seed):
    if args.algo == "olstec":
        params = TrackerParams(
            args.rank, lam=args.lam, mu=args.mu, gamma=args.gamma, col_uses_updated_a=args.col_uses_updated_a
        )
        return OlstecTracker(stream.L, stream.W, params, seed=seed)
    return SgdTracker(stream.L, stream.W, args.rank, eta=args.eta, decay=args.decay, mu=args.mu, seed=seed)


def _run_batch(args, stream, seed, reference, clock, on_estimate):
    t0 = time.perf_counter()
    result = batch_als(BatchProblem(stream.slices, args.rank, mu=args.mu, max_iter=args.max_iter, tol=args.tol), seed)
    per_slice = (time.perf_counter() - t0) * 1e3 / len(stream) if clock else 0.0
    records, total = [], 0.0
    for k, (s, truth) in enumerate(stream):
        X = reconstruct_slice(result.model(k))
        err = slice_error(X, s, truth, reference)
        total += err
        records.append(MetricRecord(s.t, err, total / (k + 1), per_slice, "als-batch", seed))
        if on_estimate is not None:
            on_estimate(s.t, X)
    return records


def _one_run(args, stream, seed, recon_out=None):
    reference = resolve_reference(stream, args.reference)
    clock = not args.no_wall_clock
    writer_ctx = open_writer(recon_out, stream.L, stream.W, len(stream)) if recon_out else None
    writer = writer_ctx.__enter__() if writer_ctx else None
    ones = np.ones((stream.L, stream.W), dtype=bool)

    def on_estimate(t, X):
        writer.write(MaskedSlice(X, ones, t))

    try:
        hook = on_estimate if writer else None
        if args.algo == "als-batch":
            return _run_batch(args, stream, seed, reference, clock, hook)
        return track_stream(_make_tracker(args, stream, seed), stream, reference, seed, clock, hook)
    finally:
        if writer_ctx:
            writer_ctx.__exit__(None, None, None)


def _run_worker(payload):
    args, path, seed = payload
    return _one_run(args, read_stream(path), seed)


def _input_identity(path):
    if str(path) == "-":
        return {"input": "-"}
    return {"input": Path(path).name, "input_sha256": hashlib.sha256(Path(path).read_bytes()).hexdigest()}


def _metadata(args, stream, seeds):
    return {
        "tool": "olstec", "version": __version__, "stream_format": VERSION, "rng": RNG_VERSION,
        "algo": args.algo, "rank": args.rank, "lambda": args.lam, "mu": args.mu, "gamma": args.gamma,
        "eta": args.eta, "decay": args.decay, "col_uses_updated_a": args.col_uses_updated_a,
        "reference": resolve_reference(stream, args.reference), **_input_identity(args.input),
        "L": stream.L, "W": stream.W, "T": len(stream), "seeds": seeds,
        "wall_clock": not args.no_wall_clock,
    }


def cmd_track(args):
    stream = read_stream(args.input)
    if len(stream) == 0:
        raise StructuralError("input stream holds no slices")
    seeds = [args.seed + k for k in range(args.runs)]
    runs = [_one_run(args, stream, seeds[0], args.recon_out)]
    rest = seeds[1:]
    if rest and args.jobs > 1 and str(args.input) != "-":
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs.extend(pool.map(_run_worker, [(args, args.input, s) for s in rest]))
    else:
        runs.extend(_one_run(args, stream, s) for s in rest)

    meta = _metadata(args, stream, seeds)
    if args.metrics_out:
        write_metrics_csv(args.metrics_out, [r for run in runs for r in run], meta)
    if args.runs > 1:
        summary = summarize_runs(runs)
        target = args.summary_out or (
            Path(args.metrics_out).with_suffix(".summary.csv") if args.metrics_out and args.metrics_out != "-" else "-"
        )
        write_summary_csv(target, summary, meta)
    for seed, run in zip(seeds, runs):
        log.info("%s seed %d: final running-average error %.3e", args.algo, seed, run[-1].running_avg)
    return EXIT_OK


def cmd_bench(args):
    rows = bench(
        Ls=[int(x) for x in args.L.split(",")], ranks=[int(x) for x in args.ranks.split(",")],
        rhos=[float(x) for x in args.rhos.split(",")], n_slices=args.slices, reps=args.reps, seed=args.seed,
    )
    cols = ("L", "W", "rank", "rho", "n_observed", "median_ms", "state_bytes", "traced_bytes")
    lines = [",".join(cols)] + [",".join(format(getattr(r, c), ".17g") if isinstance(getattr(r, c), float)
                                         else str(getattr(r, c)) for c in cols) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.output and args.output != "-":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="olstec", description="Streaming CP subspace tracking experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic stream file")
    s.add_argument("--mode", choices=("stationary", "dynamic", "drift"), default="stationary")
    s.add_argument("--L", type=int, default=100)
    s.add_argument("--W", type=int, default=100)
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--rank", type=int, default=5)
    s.add_argument("--rho", type=float, default=0.1)
    s.add_argument("--noise", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--segments", help="comma-separated segment lengths (dynamic mode)")
    s.add_argument("--drift-start", type=int, default=0)
    s.add_argument("--drift-length", type=int, default=0)
    s.add_argument("--fixed-mask", action="store_true", help="draw one mask for all slices")
    s.add_argument("--no-truth", action="store_true", help="omit ground-truth blocks")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("track", help="run a tracker over a stream file")
    t.add_argument("--algo", choices=("olstec", "sgd", "als-batch"), default="olstec")
    t.add_argument("--input", "-i", required=True)
    t.add_argument("--rank", type=int, default=5)
    t.add_argument("--lambda", dest="lam", type=float, default=0.88)
    t.add_argument("--mu", type=float, default=1e-9)
    t.add_argument("--gamma", type=float, default=100.0)
    t.add_argument("--eta", type=float, default=1.0, help="SGD base step size")
    t.add_argument("--decay", type=float, default=0.5, help="SGD step-size decay exponent")
    t.add_argument("--max-iter", type=int, default=500, help="batch ALS sweeps")
    t.add_argument("--tol", type=float, default=1e-10, help="batch ALS relative tolerance")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--runs", type=int, default=1)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--reference", choices=("auto", "truth", "observed"), default="auto")
    t.add_argument("--col-uses-updated-a", action="store_true")
    t.add_argument("--no-wall-clock", action="store_true", help="write wall_ms as 0 for reproducible CSVs")
    t.add_argument("--metrics-out")
    t.add_argument("--summary-out")
    t.add_argument("--recon-out", help="write reconstructions of the first run as a stream file")
    t.set_defaults(func=cmd_track)

    g = sub.add_parser("ingest", help="convert grayscale frames to a stream file")
    g.add_argument("--frames", required=True)
    g.add_argument("--rho", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--raw-shape", help="HxW for headerless .raw frames")
    g.add_argument("--output", "-o", required=True)
    g.set_defaults(func=cmd_ingest)

    b = sub.add_parser("bench", help="per-slice runtime and memory scaling")
    b.add_argument("--L", default="100")
    b.add_argument("--ranks", default="5,10,15")
    b.add_argument("--rhos", default="0.1,0.2")
    b.add_argument("--slices", type=int, default=20)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--output", "-o")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "runs", 1) < 1:
        print("olstec: --runs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"olstec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"olstec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StreamFormatError, OSError) as exc:
        print(f"olstec: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StructuralError, OlstecError) as exc:
        print(f"olstec: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
