"""Scaled-down synthetic experiments shared by ``scripts/`` and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from olstec.baselines import SgdTracker, tune_sgd_eta
from olstec.core import TrackerParams
from olstec.metrics import residuals, track_stream
from olstec.streams import gen_dynamic, gen_stationary, reference_dynamic, reference_stationary
from olstec.tracker import OlstecTracker

HELDOUT_SEED = 10_000


def residual_trace(tracker, stream, reference="auto") -> np.ndarray:
    return residuals(track_stream(tracker, stream, reference=reference, clock=False))


def tuned_sgd_eta(rho=0.1, rank=5, mu=1e-9, T=300):
    """Tune the SGD step size on a held-out stationary stream (first ``T`` slices)."""
    spec = reference_stationary(rho, seed=HELDOUT_SEED)
    spec.T = T
    eta, _ = tune_sgd_eta(gen_stationary(spec), rank, mu=mu, seed=HELDOUT_SEED)
    return eta


def compare_on(stream, rank=5, lam=0.88, mu=1e-9, eta=1.0, seed=0):
    """Residual traces of OLSTEC and the SGD baseline from identical initial factors."""
    ol = OlstecTracker(stream.L, stream.W, TrackerParams(rank, lam=lam, mu=mu), seed=seed)
    sg = SgdTracker(stream.L, stream.W, rank, eta=eta, mu=mu, A=ol.model.A.copy(), C=ol.model.C.copy())
    return {"olstec": residual_trace(ol, stream), "sgd": residual_trace(sg, stream)}


def stationary_run(seed, rho=0.1, eta=1.0, **kw):
    return compare_on(gen_stationary(reference_stationary(rho, seed=seed)), eta=eta, seed=seed, **kw)


def dynamic_run(seed, rho=0.1, eta=1.0, **kw):
    return compare_on(gen_dynamic(reference_dynamic(rho, seed=seed)), eta=eta, seed=seed, **kw)


@dataclass
class Recovery:
    change: int
    steady: float  # median residual over the slices just before the change
    first_below: int | None  # slices after the change until residual < factor * steady

    def recovered(self, within) -> bool:
        return self.first_below is not None and self.first_below < within


def recovery_after_changes(res, changes, pre=50, factor=3.0, horizon=250):
    out = []
    for k in changes:
        steady = float(np.median(res[k - pre:k]))
        below = np.flatnonzero(res[k:k + horizon] < factor * steady)
        out.append(Recovery(k, steady, int(below[0]) if below.size else None))
    return out


def first_below(res, level) -> int | None:
    idx = np.flatnonzero(np.asarray(res) < level)
    return int(idx[0]) if idx.size else None
