"""Per-slice runtime and state-memory measurements for the tracker."""

from __future__ import annotations

import statistics
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from olstec.core import MaskedSlice, TrackerParams
from olstec.streams import ScenarioSpec, gen_stationary
from olstec.tracker import OlstecTracker


@dataclass
class BenchRow:
    L: int
    W: int
    rank: int
    rho: float
    n_observed: float
    median_ms: float
    state_bytes: int
    traced_bytes: int


def _stream(L, W, rank, rho, n_slices, seed):
    return gen_stationary(ScenarioSpec(L=L, W=W, T=n_slices, rank=rank, rho=rho, noise=1e-3, seed=seed))


def time_steps(L, W, rank, rho, n_slices=20, reps=5, seed=0, warmup=3) -> float:
    """Median over ``reps`` repetitions of the mean per-slice step time (ms)."""
    stream = _stream(L, W, rank, rho, n_slices + warmup, seed)
    samples = []
    for rep in range(reps):
        tr = OlstecTracker(L, W, TrackerParams(rank), seed=seed + rep)
        for s in stream.slices[:warmup]:
            tr.step(s)
        t0 = time.perf_counter()
        for s in stream.slices[warmup:]:
            tr.step(s)
        samples.append((time.perf_counter() - t0) * 1e3 / n_slices)
    return statistics.median(samples)


def state_memory(L, W, rank, n_slices=3, seed=0) -> tuple[int, int]:
    """Bytes retained by a tracker after a few steps: ``(nbytes, traced)``.

    ``traced`` is the tracemalloc growth attributable to the tracker object,
    measured after the slices are released.
    """
    slices = [
        MaskedSlice(s.values, s.mask, s.t) for s in _stream(L, W, rank, 0.1, n_slices, seed).slices
    ]
    OlstecTracker(L, W, TrackerParams(rank), seed=seed).step(slices[0])  # warm one-time caches
    tracemalloc.start()
    try:
        base = tracemalloc.get_traced_memory()[0]
        tr = OlstecTracker(L, W, TrackerParams(rank), seed=seed)
        for s in slices:
            X, b = tr.step(s)
        del X, b
        traced = tracemalloc.get_traced_memory()[0] - base
    finally:
        tracemalloc.stop()
    return tr.state.nbytes, traced


def bench(Ls=(100,), ranks=(5, 10, 15), rhos=(0.1, 0.2), n_slices=20, reps=5, seed=0):
    rows = []
    for L in Ls:
        for rank in ranks:
            nbytes, traced = state_memory(L, L, rank, seed=seed)
            for rho in rhos:
                ms = time_steps(L, L, rank, rho, n_slices, reps, seed)
                rows.append(BenchRow(L, L, rank, rho, float(rho * L * L), ms, nbytes, traced))
    return rows


def cost_model(L, W, rank, n_observed) -> float:
    """Operation-count proxy ``|Omega| R^2 + (L + W) R^3``."""
    return n_observed * rank**2 + (L + W) * rank**3


def fit_ratio(rows) -> np.ndarray:
    """Measured time divided by the cost model, one entry per row."""
    return np.array([r.median_ms / cost_model(r.L, r.W, r.rank, r.n_observed) for r in rows])
