"""Reference trackers: a first-order SGD tracker and a batch weighted ALS.

The SGD tracker shares the ridge weight solve with OLSTEC and then takes a
single gradient step on ``A`` and ``C`` with step size ``eta / t**decay``. It
is a generic baseline with a fully specified update rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from olstec.core import FactorModel, MaskedSlice, TrackerParams, reconstruct_slice
from olstec.errors import DivergenceError, StructuralError
from olstec.tracker import init_state, make_rng, solve_weights

DIVERGENCE_NORM = 1e6

SGD_ETA_GRID = (0.1, 1.0, 10.0)


@dataclass
class SgdState:
    model: FactorModel
    eta: float = 0.1
    decay: float = 0.5
    mu: float = 1e-9
    t: int = 0

    def __post_init__(self):
        if self.eta < 0 or self.decay < 0:
            raise StructuralError("eta and decay must be nonnegative")

    def step_size(self, t) -> float:
        return self.eta / t**self.decay


def slice_objective(A, C, b, slice_: MaskedSlice, mu: float) -> float:
    """``0.5 ||mask * (Y - A diag(b) C^T)||^2 + mu/2 (||A||^2 + ||C||^2)``."""
    E = np.where(slice_.mask, slice_.values - (A * b) @ C.T, 0.0)
    return 0.5 * float(np.sum(E * E)) + 0.5 * mu * float(np.sum(A * A) + np.sum(C * C))


def slice_gradient(A, C, b, slice_: MaskedSlice, mu: float):
    """Gradient of :func:`slice_objective` with respect to ``A`` and ``C``."""
    E = np.where(slice_.mask, slice_.values - (A * b) @ C.T, 0.0)
    gA = -(E @ C) * b + mu * A
    gC = -(E.T @ A) * b + mu * C
    return gA, gC


def init_sgd(L, W, rank, eta=0.1, decay=0.5, mu=1e-9, seed=0, A=None, C=None) -> SgdState:
    """SGD state with the same initial factors as :func:`olstec.tracker.init_state`."""
    st = init_state(L, W, TrackerParams(rank, mu=mu), seed, A=A, C=C)
    return SgdState(st.model, eta=eta, decay=decay, mu=mu)


class _WeightView:
    # solve_weights only reads model and params
    def __init__(self, state: SgdState):
        self.model = state.model
        self.params = TrackerParams(state.model.rank, mu=state.mu)

    @property
    def shape(self):
        return self.model.shape


def sgd_step(state: SgdState, slice_: MaskedSlice):
    """Weight solve followed by one gradient step; returns ``(X_t, b)``.

    ``X_t`` uses the factors from before the gradient step.
    """
    b = solve_weights(_WeightView(state), slice_)
    A, C = state.model.A, state.model.C
    X = reconstruct_slice(FactorModel(A, C, b))
    gA, gC = slice_gradient(A, C, b, slice_, state.mu)
    eta = state.step_size(state.t + 1)
    A_new = A - eta * gA
    C_new = C - eta * gC
    norm = max(np.linalg.norm(A_new), np.linalg.norm(C_new))
    if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
        raise DivergenceError(f"factor norm {norm:.3g} exceeds {DIVERGENCE_NORM:g} at slice {slice_.t}")
    state.model = FactorModel(A_new, C_new, b)
    state.t += 1
    return X, b


class SgdTracker:
    """Stateful wrapper around :func:`sgd_step`, labelled ``sgd``."""

    name = "sgd"

    def __init__(self, L, W, rank, eta=0.1, decay=0.5, mu=1e-9, seed=0, A=None, C=None):
        self.state = init_sgd(L, W, rank, eta, decay, mu, seed, A=A, C=C)

    @property
    def model(self) -> FactorModel:
        return self.state.model

    def step(self, slice_: MaskedSlice, post_update=False):
        X, b = sgd_step(self.state, slice_)
        if post_update:
            X = reconstruct_slice(self.state.model)
        return X, b


def tune_sgd_eta(stream, rank, mu=1e-9, seed=0, grid=SGD_ETA_GRID, reference=None):
    """Pick the step size from ``grid`` with the lowest mean normalized residual.

    ``stream`` should be a held-out stream (not the evaluation stream).
    Step sizes that diverge are skipped; returns ``(best_eta, scores)``.
    """
    scores = {}
    for eta in grid:
        tr = SgdTracker(stream.L, stream.W, rank, eta=eta, mu=mu, seed=seed)
        total = 0.0
        try:
            for s, truth in stream:
                X, _ = tr.step(s)
                ref = truth if truth is not None else s.values
                total += float(np.sum((X - ref) ** 2) / np.sum(ref**2))
        except DivergenceError:
            scores[eta] = math.inf
            continue
        scores[eta] = total / len(stream)
    best = min(scores, key=scores.get)
    if not math.isfinite(scores[best]):
        raise DivergenceError(f"every step size in {grid} diverged")
    return best, scores


# ---------------------------------------------------------------------------
# batch ALS


@dataclass
class BatchProblem:
    slices: list[MaskedSlice]
    rank: int
    mu: float = 1e-9
    max_iter: int = 500
    tol: float = 1e-10

    def __post_init__(self):
        if not self.slices:
            raise StructuralError("batch problem needs at least one slice")
        shape = self.slices[0].shape
        if any(s.shape != shape for s in self.slices):
            raise StructuralError("all slices must share L and W")


@dataclass
class BatchResult:
    A: np.ndarray
    C: np.ndarray
    B: np.ndarray  # (T, R), row t holds the weights of slice t
    objective: list[float] = field(default_factory=list)
    converged: bool = False

    def model(self, t) -> FactorModel:
        return FactorModel(self.A, self.C, self.B[t])

    def reconstruct(self) -> np.ndarray:
        """Full (T, L, W) reconstruction."""
        return np.einsum("lr,tr,wr->tlw", self.A, self.B, self.C)


def batch_objective(Y, M, A, B, C, mu) -> float:
    """``0.5 ||M * (Y - X)||^2 + mu (||A||^2 + ||B||^2 + ||C||^2)`` on a (T, L, W) tensor."""
    X = np.einsum("lr,tr,wr->tlw", A, B, C)
    E = M * (Y - X)
    return 0.5 * float(np.sum(E * E)) + mu * float(np.sum(A * A) + np.sum(B * B) + np.sum(C * C))


def _ridge_rows(M, Y, K, mu):
    """Solve, for each row i, ``(sum_j M[i,j] K_j K_j^T + 2 mu I) x = sum_j M[i,j] Y[i,j] K_j``."""
    R = K.shape[1]
    outer = (K[:, :, None] * K[:, None, :]).reshape(K.shape[0], R * R)
    G = (M @ outer).reshape(M.shape[0], R, R) + 2.0 * mu * np.eye(R)
    rhs = (M * Y) @ K
    return np.linalg.solve(G, rhs[:, :, None])[:, :, 0]


def batch_als(problem: BatchProblem, seed=0) -> BatchResult:
    """Alternating ridge least squares over ``A`` rows, ``C`` rows and each ``b^t``.

    Every subproblem is solved exactly, so the objective trace never
    increases. Stops when the relative objective change falls below
    ``problem.tol`` or after ``problem.max_iter`` sweeps.
    """
    Y = np.stack([s.values for s in problem.slices])  # (T, L, W)
    M = np.stack([s.mask for s in problem.slices]).astype(float)
    T, L, W = Y.shape
    R, mu = problem.rank, problem.mu
    rng = make_rng(seed, "batch")
    A = rng.standard_normal((L, R)) / np.sqrt(R)
    C = rng.standard_normal((W, R)) / np.sqrt(R)
    B = rng.standard_normal((T, R)) / np.sqrt(R)

    def khatri_rao(U, V):
        return (U[:, None, :] * V[None, :, :]).reshape(-1, R)

    trace = [batch_objective(Y, M, A, B, C, mu)]
    converged = False
    for _ in range(problem.max_iter):
        # A: rows l, columns indexed by (t, w)
        A = _ridge_rows(
            M.transpose(1, 0, 2).reshape(L, T * W), Y.transpose(1, 0, 2).reshape(L, T * W), khatri_rao(B, C), mu
        )
        # C: rows w, columns indexed by (t, l)
        C = _ridge_rows(
            M.transpose(2, 0, 1).reshape(W, T * L), Y.transpose(2, 0, 1).reshape(W, T * L), khatri_rao(B, A), mu
        )
        # B: rows t, columns indexed by (l, w)
        B = _ridge_rows(M.reshape(T, L * W), Y.reshape(T, L * W), khatri_rao(A, C), mu)
        trace.append(batch_objective(Y, M, A, B, C, mu))
        if abs(trace[-2] - trace[-1]) <= problem.tol * max(abs(trace[-2]), 1e-300):
            converged = True
            break
    return BatchResult(A, C, B, trace, converged)
