"""Seeded synthetic slice streams.

All randomness comes from numpy's Philox generator keyed by
``SeedSequence((seed, 0))`` (format version ``RNG_VERSION``). Draw order is part of the contract: truth factors
first, then per slice the noise block followed by the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from olstec.core import MaskedSlice, StreamSource
from olstec.errors import StructuralError
from olstec.tracker import make_rng

RNG_VERSION = "philox-seedseq-1"

MODES = ("stationary", "dynamic", "drift")


@dataclass
class ScenarioSpec:
    """Parameters of a synthetic stream.

    ``segments`` is a list of ``(length, fresh)`` pairs for the dynamic mode;
    a segment with ``fresh=False`` reuses the previous segment's factors.
    For ``drift`` the truth factors interpolate linearly from one draw to a
    second one over ``drift_window = (start, length)``.
    """

    mode: str = "stationary"
    L: int = 100
    W: int = 100
    T: int = 1000
    rank: int = 5
    noise: float = 1e-3
    rho: float = 0.1
    segments: list[tuple[int, bool]] = field(default_factory=list)
    drift_window: tuple[int, int] = (0, 0)
    fixed_mask: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise StructuralError(f"unknown mode {self.mode!r}")
        if min(self.L, self.W, self.T, self.rank) < 1:
            raise StructuralError("L, W, T and rank must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise StructuralError(f"rho must lie in (0, 1], got {self.rho}")
        if self.noise < 0:
            raise StructuralError("noise must be nonnegative")
        if self.mode == "dynamic":
            if not self.segments:
                raise StructuralError("dynamic mode needs segments")
            if sum(n for n, _ in self.segments) != self.T:
                raise StructuralError("segment lengths must sum to T")
        if self.mode == "drift":
            start, length = self.drift_window
            if start < 0 or length < 0 or start + length > self.T:
                raise StructuralError("drift window must lie inside [0, T)")


def reference_stationary(rho=0.1, seed=0, **kw) -> ScenarioSpec:
    """Stationary scenario at the reference sizes (L=W=100, T=1000, R=5)."""
    return ScenarioSpec(mode="stationary", L=100, W=100, T=1000, rank=5, noise=1e-3, rho=rho, seed=seed, **kw)


def reference_dynamic(rho=0.1, seed=0, **kw) -> ScenarioSpec:
    """Four independent rank-5 blocks of 100 x 100 x 250 in series."""
    return ScenarioSpec(
        mode="dynamic", L=100, W=100, T=1000, rank=5, noise=1e-3, rho=rho,
        segments=[(250, True)] * 4, seed=seed, **kw,
    )


def gen_mask(L, W, rho, seed=None, rng=None) -> np.ndarray:
    """I.i.d. Bernoulli(``rho``) observation mask."""
    if not 0.0 < rho <= 1.0:
        raise StructuralError(f"rho must lie in (0, 1], got {rho}")
    if rng is None:
        rng = make_rng(seed)
    return rng.random((L, W)) < rho


def _draw_factors(rng, spec):
    A = rng.standard_normal((spec.L, spec.rank))
    C = rng.standard_normal((spec.W, spec.rank))
    return A, C


def _emit(spec, rng, truths) -> StreamSource:
    slices = []
    fixed = gen_mask(spec.L, spec.W, spec.rho, rng=rng) if spec.fixed_mask else None
    for t, truth in enumerate(truths):
        noisy = truth + spec.noise * rng.standard_normal(truth.shape)
        mask = fixed if fixed is not None else gen_mask(spec.L, spec.W, spec.rho, rng=rng)
        slices.append(MaskedSlice(noisy, mask, t))
    return StreamSource(spec.L, spec.W, slices, list(truths))


def gen_stationary(spec: ScenarioSpec) -> StreamSource:
    """Stream whose slices all share one pair of Gaussian truth factors."""
    if spec.mode != "stationary":
        raise StructuralError(f"expected a stationary spec, got {spec.mode!r}")
    rng = make_rng(spec.seed)
    A, C = _draw_factors(rng, spec)
    B = rng.standard_normal((spec.T, spec.rank))
    truths = [(A * B[t]) @ C.T for t in range(spec.T)]
    return _emit(spec, rng, truths)


def gen_dynamic(spec: ScenarioSpec) -> StreamSource:
    """Concatenation of segments, each with its own truth factors."""
    if spec.mode != "dynamic":
        raise StructuralError(f"expected a dynamic spec, got {spec.mode!r}")
    rng = make_rng(spec.seed)
    truths = []
    A = C = None
    for length, fresh in spec.segments:
        if fresh or A is None:
            A, C = _draw_factors(rng, spec)
        B = rng.standard_normal((length, spec.rank))
        truths.extend((A * B[k]) @ C.T for k in range(length))
    return _emit(spec, rng, truths)


def gen_drift(spec: ScenarioSpec) -> StreamSource:
    """Slowly moving subspace: factors slide from one draw to another."""
    if spec.mode != "drift":
        raise StructuralError(f"expected a drift spec, got {spec.mode!r}")
    rng = make_rng(spec.seed)
    A0, C0 = _draw_factors(rng, spec)
    A1, C1 = _draw_factors(rng, spec)
    B = rng.standard_normal((spec.T, spec.rank))
    start, length = spec.drift_window
    truths = []
    for t in range(spec.T):
        s = 0.0 if t < start else 1.0 if t >= start + length else (t - start) / length
        A = (1 - s) * A0 + s * A1
        C = (1 - s) * C0 + s * C1
        truths.append((A * B[t]) @ C.T)
    return _emit(spec, rng, truths)


def generate(spec: ScenarioSpec) -> StreamSource:
    return {"stationary": gen_stationary, "dynamic": gen_dynamic, "drift": gen_drift}[spec.mode](spec)
