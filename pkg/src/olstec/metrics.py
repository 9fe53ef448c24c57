"""Per-slice error metrics, run drivers and multi-run summaries."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from olstec.core import StreamSource
from olstec.errors import StructuralError, UndefinedMetricError

REFERENCES = ("auto", "truth", "observed")


@dataclass
class MetricRecord:
    t: int
    residual: float
    running_avg: float
    wall_ms: float
    algo: str
    seed: int = 0


@dataclass
class SummaryRow:
    t: int
    algo: str
    mean_residual: float
    std_residual: float
    mean_running_avg: float
    std_running_avg: float
    n_runs: int


def normalized_residual(X, Y, mask=None) -> float:
    """``||X - Y||_F^2 / ||Y||_F^2``, optionally restricted to ``mask``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise StructuralError(f"shape mismatch {X.shape} vs {Y.shape}")
    if mask is not None:
        X = np.where(mask, X, 0.0)
        Y = np.where(mask, Y, 0.0)
    denom = float(np.sum(Y * Y))
    if denom == 0.0:
        raise UndefinedMetricError("reference slice has zero norm")
    diff = X - Y
    return float(np.sum(diff * diff)) / denom


def prefix_means(errors) -> np.ndarray:
    """Running average of ``errors`` at every prefix length."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or errors.size == 0:
        raise StructuralError("need a nonempty 1-d sequence of errors")
    return np.cumsum(errors) / np.arange(1, errors.size + 1)


def running_average(errors) -> float:
    """Mean of ``errors`` (the running average at the final slice)."""
    return float(prefix_means(errors)[-1])


def resolve_reference(stream: StreamSource, reference: str) -> str:
    if reference not in REFERENCES:
        raise StructuralError(f"unknown reference {reference!r}")
    if reference == "auto":
        return "truth" if stream.has_truth else "observed"
    if reference == "truth" and not stream.has_truth:
        raise StructuralError("stream carries no ground truth")
    return reference


def slice_error(X, slice_, truth, reference: str) -> float:
    if reference == "truth":
        return normalized_residual(X, truth)
    return normalized_residual(X, slice_.values, mask=slice_.mask)


def track_stream(tracker, stream, reference="auto", seed=0, clock=True, on_estimate=None):
    """Run ``tracker`` over ``stream`` and return its metric records.

    ``tracker`` needs a ``step(slice)`` method returning ``(X_t, b)`` and a
    ``name``. With ``clock=False`` wall times are recorded as 0 so outputs
    are bit-reproducible. ``on_estimate(t, X_t)`` is called per slice.
    """
    reference = resolve_reference(stream, reference)
    records = []
    total = 0.0
    for k, (s, truth) in enumerate(stream):
        t0 = time.perf_counter()
        X, _ = tracker.step(s)
        elapsed = (time.perf_counter() - t0) * 1e3 if clock else 0.0
        err = slice_error(X, s, truth, reference)
        total += err
        records.append(MetricRecord(s.t, err, total / (k + 1), elapsed, tracker.name, seed))
        if on_estimate is not None:
            on_estimate(s.t, X)
    return records


def residuals(records) -> np.ndarray:
    return np.array([r.residual for r in records])


def _mean_std(values):
    # shifted by the first run, so identical runs give exactly zero spread
    shift = values[0]
    dev = values - shift
    ddof = 1 if values.shape[0] > 1 else 0
    return shift + dev.mean(axis=0), dev.std(axis=0, ddof=ddof)


def summarize_runs(runs) -> list[SummaryRow]:
    """Per-slice mean and sample standard deviation across runs, per algorithm."""
    if not runs:
        raise StructuralError("no runs to summarize")
    by_algo: dict[str, list] = {}
    for run in runs:
        if not run:
            raise StructuralError("empty run")
        algos = {r.algo for r in run}
        if len(algos) != 1:
            raise StructuralError("a run mixes algorithm tags")
        by_algo.setdefault(algos.pop(), []).append(run)

    rows = []
    for algo, group in by_algo.items():
        T = len(group[0])
        if any(len(run) != T for run in group):
            raise StructuralError(f"runs of {algo!r} differ in length")
        ts = [r.t for r in group[0]]
        res = np.array([[r.residual for r in run] for run in group])
        avg = np.array([[r.running_avg for r in run] for run in group])
        res_mean, res_std = _mean_std(res)
        avg_mean, avg_std = _mean_std(avg)
        for k in range(T):
            rows.append(
                SummaryRow(
                    ts[k], algo, float(res_mean[k]), float(res_std[k]), float(avg_mean[k]), float(avg_std[k]), len(group)
                )
            )
    return rows
