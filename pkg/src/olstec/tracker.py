"""Recursive-least-squares CP tracker for partially observed slice streams.

Each incoming slice is handled in three stages: a ridge least-squares solve
for the slice weights ``b`` with the factors held fixed, then an RLS update of
every row of ``A`` and finally an RLS update of every column factor row of
``C``. The per-row normal matrices ``RA[l]`` and per-column ``RC[w]`` are kept
explicitly (not their inverses) and each update is an R x R Cholesky solve.
All rows (and all columns) are processed as one batched numpy operation; the
rows never interact, so the result equals a row-by-row loop.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from olstec.core import FactorModel, MaskedSlice, TrackerParams, reconstruct_slice
from olstec.errors import ConditioningError, SingularSystemError, StructuralError


# Purpose tags keep equal user seeds from producing correlated draws.
RNG_TAGS = {"stream": 0, "tracker": 1, "batch": 2, "frames": 3}


def make_rng(seed, purpose="stream") -> np.random.Generator:
    """Philox generator keyed by ``(seed, purpose)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), RNG_TAGS[purpose]))))


@dataclass
class TrackerState:
    model: FactorModel
    RA: np.ndarray  # (L, R, R)
    RC: np.ndarray  # (W, R, R)
    params: TrackerParams
    t: int = 0
    prev_mu: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.model.shape

    @property
    def nbytes(self) -> int:
        m = self.model
        return self.RA.nbytes + self.RC.nbytes + m.A.nbytes + m.C.nbytes + m.b.nbytes

    def copy(self) -> TrackerState:
        return replace(self, model=self.model.copy(), RA=self.RA.copy(), RC=self.RC.copy())


def init_state(L: int, W: int, params: TrackerParams, seed=0, A=None, C=None) -> TrackerState:
    """Fresh tracker state.

    ``A`` and ``C`` default to standard Gaussian entries scaled by
    ``1/sqrt(R)``; pass them explicitly to start from given factors.
    ``RA[l]`` and ``RC[w]`` start at ``I / gamma``.
    """
    if L < 1 or W < 1:
        raise StructuralError(f"slice dimensions must be positive, got {L}x{W}")
    R = params.rank
    rng = make_rng(seed, "tracker")
    if A is None:
        A = rng.standard_normal((L, R)) / np.sqrt(R)
    if C is None:
        C = rng.standard_normal((W, R)) / np.sqrt(R)
    model = FactorModel(np.array(A, dtype=float), np.array(C, dtype=float), np.zeros(R))
    if model.shape != (L, W) or model.rank != R:
        raise StructuralError(f"initial factors {model.A.shape}, {model.C.shape} do not fit {L}x{W}, rank {R}")
    eye = np.eye(R) / params.gamma
    RA = np.broadcast_to(eye, (L, R, R)).copy()
    RC = np.broadcast_to(eye, (W, R, R)).copy()
    return TrackerState(model, RA, RC, params, t=0, prev_mu=params.mu)


def _check_slice(state: TrackerState, slice_: MaskedSlice):
    if slice_.shape != state.shape:
        raise StructuralError(f"slice {slice_.t} has shape {slice_.shape}, tracker expects {state.shape}")


def solve_weights(state: TrackerState, slice_: MaskedSlice) -> np.ndarray:
    """Ridge least-squares weights of ``slice_`` under the current factors.

    Solves ``(mu I + sum g g^T) b = sum y g`` over observed ``(l, w)`` with
    ``g = A[l] * C[w]``.
    """
    _check_slice(state, slice_)
    mu = state.params.mu
    R = state.params.rank
    rows, cols = np.nonzero(slice_.mask)
    if rows.size == 0 and mu == 0.0:
        raise SingularSystemError(slice_.t, f"slice {slice_.t} has no observed entries and mu = 0")
    g = state.model.A[rows] * state.model.C[cols]
    gram = g.T @ g + mu * np.eye(R)
    rhs = g.T @ slice_.values[rows, cols]
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(slice_.t) from exc
    return scipy.linalg.cho_solve(factor, rhs)


def _outer_sums(mask: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``out[i] = sum_j mask[i, j] V[j] V[j]^T`` for every row ``i`` of ``mask``."""
    R = V.shape[1]
    outer = (V[:, :, None] * V[:, None, :]).reshape(V.shape[0], R * R)
    return (mask @ outer).reshape(mask.shape[0], R, R)


def _spd_solve(M: np.ndarray, rhs: np.ndarray, axis: str, t: int) -> np.ndarray:
    """Solve the stack of SPD systems ``M[i] x[i] = rhs[i]`` via Cholesky."""
    bad = ~np.isfinite(M).all(axis=(1, 2))
    if bad.any():
        raise ConditioningError(axis, int(np.flatnonzero(bad)[0]), t)
    try:
        chol = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        for i in range(M.shape[0]):
            try:
                np.linalg.cholesky(M[i])
            except np.linalg.LinAlgError:
                raise ConditioningError(axis, i, t) from None
        raise
    y = np.linalg.solve(chol, rhs[:, :, None])
    return np.linalg.solve(np.swapaxes(chol, 1, 2), y)[:, :, 0]


def _rls_update(F, R_prev, mask, resid, V, lam, dmu, axis, t):
    """One RLS pass over all rows of ``F`` given regressors ``V``.

    ``resid`` is the masked residual with rows aligned to ``F``; row ``i``
    sees regressors ``V[j]`` wherever ``mask[i, j]`` is set.
    """
    R = F.shape[1]
    R_new = lam * R_prev + _outer_sums(mask, V) + dmu * np.eye(R)
    R_new = 0.5 * (R_new + np.swapaxes(R_new, 1, 2))
    rhs = resid @ V - dmu * F
    return F + _spd_solve(R_new, rhs, axis, t), R_new


def update_row_factors(state: TrackerState, slice_: MaskedSlice, b: np.ndarray):
    """RLS update of every row of ``A`` using ``C`` from the previous slice.

    Returns the new ``(A, RA)``; ``state`` is not modified.
    """
    _check_slice(state, slice_)
    p = state.params
    A, C = state.model.A, state.model.C
    alpha = C * b  # alpha_w = diag(b) c^w
    mask = slice_.mask.astype(float)
    resid = mask * (slice_.values - A @ alpha.T)
    dmu = p.mu - p.lam * state.prev_mu
    return _rls_update(A, state.RA, mask, resid, alpha, p.lam, dmu, "row", slice_.t)


def update_col_factors(state: TrackerState, slice_: MaskedSlice, b: np.ndarray, A=None):
    """RLS update of every row of ``C``; mirror image of :func:`update_row_factors`.

    ``A`` overrides the row factor used to build the regressors (the
    previous-slice ``A`` by default).
    """
    _check_slice(state, slice_)
    p = state.params
    C = state.model.C
    A = state.model.A if A is None else A
    beta = A * b  # beta_l = diag(b) a^l
    mask_t = slice_.mask.T.astype(float)
    resid_t = mask_t * (slice_.values.T - C @ beta.T)
    dmu = p.mu - p.lam * state.prev_mu
    return _rls_update(C, state.RC, mask_t, resid_t, beta, p.lam, dmu, "column", slice_.t)


def step(state: TrackerState, slice_: MaskedSlice, post_update: bool = False):
    """Process one slice in place and return ``(X_t, b)``.

    ``X_t`` is built from the factors before this slice's update unless
    ``post_update`` is set. On any error ``state`` is left untouched.
    """
    _check_slice(state, slice_)
    b = solve_weights(state, slice_)
    X = reconstruct_slice(FactorModel(state.model.A, state.model.C, b))
    A_new, RA_new = update_row_factors(state, slice_, b)
    A_for_cols = A_new if state.params.col_uses_updated_a else None
    C_new, RC_new = update_col_factors(state, slice_, b, A=A_for_cols)

    state.model = FactorModel(A_new, C_new, b)
    state.RA = RA_new
    state.RC = RC_new
    state.prev_mu = state.params.mu
    state.t += 1
    if post_update:
        X = reconstruct_slice(state.model)
    return X, b


class OlstecTracker:
    """Stateful wrapper around :func:`step`.

    Parameters
    ----------
    L, W : int
        Slice dimensions.
    params : TrackerParams
    seed : int
        Seed for the random initial factors.
    record_history : bool
        Keep every slice weight vector in ``self.history``.
    """

    name = "olstec"

    def __init__(self, L, W, params: TrackerParams, seed=0, record_history=False, A=None, C=None):
        self.state = init_state(L, W, params, seed, A=A, C=C)
        self.history = [] if record_history else None

    @property
    def model(self) -> FactorModel:
        return self.state.model

    def step(self, slice_: MaskedSlice, post_update=False):
        X, b = step(self.state, slice_, post_update=post_update)
        if self.history is not None:
            self.history.append(b.copy())
        return X, b
