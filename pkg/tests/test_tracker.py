import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from olstec.core import FactorModel, MaskedSlice, TrackerParams, masked_residual, reconstruct_slice
from olstec.errors import ConditioningError, SingularSystemError, StructuralError
from olstec.tracker import (
    OlstecTracker,
    init_state,
    solve_weights,
    step,
    update_col_factors,
    update_row_factors,
)
from conftest import random_stream
from oracles import definitional_sums, run_with_history, weights_oracle


def test_init_shapes_and_scale():
    st_ = init_state(100, 80, TrackerParams(5, gamma=1000.0), seed=3)
    assert st_.RA.shape == (100, 5, 5)
    assert st_.RC.shape == (80, 5, 5)
    np.testing.assert_array_equal(st_.RA[17], 0.001 * np.eye(5))
    np.testing.assert_array_equal(st_.model.b, np.zeros(5))
    assert st_.t == 0 and st_.prev_mu == 1e-9


def test_init_deterministic():
    a = init_state(6, 5, TrackerParams(2), seed=11)
    b = init_state(6, 5, TrackerParams(2), seed=11)
    np.testing.assert_array_equal(a.model.A, b.model.A)
    np.testing.assert_array_equal(a.model.C, b.model.C)
    c = init_state(6, 5, TrackerParams(2), seed=12)
    assert not np.array_equal(a.model.A, c.model.A)


def test_init_rejects_bad_dimensions():
    with pytest.raises(StructuralError):
        init_state(0, 5, TrackerParams(2))


def test_weights_scalar_case():
    st_ = init_state(3, 4, TrackerParams(1, mu=0.0), A=np.ones((3, 1)), C=np.ones((4, 1)))
    b = solve_weights(st_, MaskedSlice.full(5 * np.ones((3, 4))))
    np.testing.assert_allclose(b, [5.0], rtol=1e-15)


def test_weights_empty_mask():
    st_ = init_state(3, 4, TrackerParams(2, mu=1e-9), seed=0)
    s = MaskedSlice(np.ones((3, 4)), np.zeros((3, 4), dtype=bool), t=7)
    np.testing.assert_array_equal(solve_weights(st_, s), np.zeros(2))
    st0 = init_state(3, 4, TrackerParams(2, mu=0.0), seed=0)
    with pytest.raises(SingularSystemError, match="slice 7"):
        solve_weights(st0, s)


@pytest.mark.parametrize("seed", range(5))
def test_weights_match_design_matrix_oracle(seed):
    s = random_stream(4, 4, 2, 1, 0.6, seed)[0]
    st_ = init_state(4, 4, TrackerParams(2, mu=1e-3), seed=seed)
    b = solve_weights(st_, s)
    ref = weights_oracle(st_.model.A, st_.model.C, s, 1e-3)
    np.testing.assert_allclose(b, ref, rtol=1e-10)


def test_unobserved_row_keeps_factor():
    s = random_stream(5, 4, 2, 1, 1.0, 0)[0]
    s.mask[2] = False
    s.values[2] = 0.0
    st_ = init_state(5, 4, TrackerParams(2, lam=0.9, mu=1e-9), seed=1)
    b = solve_weights(st_, s)
    A, RA = update_row_factors(st_, s, b)
    np.testing.assert_allclose(A[2], st_.model.A[2], atol=1e-12)
    expected = 0.9 * st_.RA[2] + (1 - 0.9) * 1e-9 * np.eye(2)
    np.testing.assert_allclose(RA[2], expected, rtol=1e-14)


def test_unobserved_column_keeps_factor():
    s = random_stream(5, 4, 2, 1, 1.0, 0)[0]
    s.mask[:, 1] = False
    s.values[:, 1] = 0.0
    st_ = init_state(5, 4, TrackerParams(2), seed=1)
    b = solve_weights(st_, s)
    C, _ = update_col_factors(st_, s, b)
    np.testing.assert_allclose(C[1], st_.model.C[1], atol=1e-12)


def test_zero_innovation_keeps_factors():
    st_ = init_state(5, 6, TrackerParams(2, mu=0.0), seed=4)
    b = np.array([0.7, -1.3])
    Y = reconstruct_slice(FactorModel(st_.model.A, st_.model.C, b))
    s = MaskedSlice(Y, np.random.default_rng(0).random((5, 6)) < 0.5)
    A, _ = update_row_factors(st_, s, b)
    C, _ = update_col_factors(st_, s, b)
    np.testing.assert_allclose(A, st_.model.A, atol=1e-12)
    np.testing.assert_allclose(C, st_.model.C, atol=1e-12)


def _check_definitional(lam, seed, T=3, L=4, W=4, R=2, rho=0.7, mu=1e-9, gamma=100.0, variant=False):
    slices = random_stream(L, W, R, T, rho, seed)
    params = TrackerParams(R, lam=lam, mu=mu, gamma=gamma, col_uses_updated_a=variant)
    tr = OlstecTracker(L, W, params, seed=seed)
    A_hist, C_hist, bs, RAs, RCs = run_with_history(tr, slices)
    for t in range(1, T + 1):
        RA, sA, RC, sC = definitional_sums(slices, bs, A_hist, C_hist, lam, mu, gamma, t, variant)
        np.testing.assert_allclose(RAs[t], RA, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(RCs[t], RC, rtol=1e-8, atol=1e-8)
        init_A = lam**t / gamma * A_hist[0]
        init_C = lam**t / gamma * C_hist[0]
        lhsA = np.einsum("lij,lj->li", RAs[t], A_hist[t])
        lhsC = np.einsum("wij,wj->wi", RCs[t], C_hist[t])
        np.testing.assert_allclose(lhsA, sA + init_A, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(lhsC, sC + init_C, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_recursion_matches_definitional_sums(seed):
    _check_definitional(0.9, seed)


def test_definitional_sums_with_updated_a_variant():
    _check_definitional(0.9, 7, variant=True)


def test_definitional_sums_with_ridge():
    _check_definitional(0.8, 3, mu=0.05, gamma=2.0)


def test_transposed_stream_swaps_factors():
    slices = random_stream(5, 4, 2, 6, 0.6, 21)
    params = TrackerParams(2, lam=0.9)
    tr = OlstecTracker(5, 4, params, seed=2)
    A0, C0 = tr.model.A.copy(), tr.model.C.copy()
    tt = OlstecTracker(4, 5, params, A=C0, C=A0)
    for s in slices:
        X, b = tr.step(s)
        Xt, bt = tt.step(MaskedSlice(s.values.T, s.mask.T, s.t))
        np.testing.assert_allclose(bt, b, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(tt.model.C, tr.model.A, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(tt.model.A, tr.model.C, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(Xt, X.T, rtol=1e-12, atol=1e-12)


def test_row_permutation_invariance():
    s = random_stream(7, 5, 3, 1, 0.7, 8)[0]
    st_ = init_state(7, 5, TrackerParams(3), seed=5)
    b = solve_weights(st_, s)
    A, RA = update_row_factors(st_, s, b)
    perm = np.random.default_rng(1).permutation(7)
    sp = MaskedSlice(s.values[perm], s.mask[perm])
    stp = init_state(7, 5, TrackerParams(3), A=st_.model.A[perm], C=st_.model.C)
    Ap, RAp = update_row_factors(stp, sp, b)
    np.testing.assert_allclose(Ap, A[perm], rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(RAp, RA[perm], rtol=1e-14, atol=1e-14)


def test_batched_rows_match_sequential_loop():
    """Vectorized row update equals a one-row-at-a-time Cholesky loop in reverse order."""
    s = random_stream(6, 5, 2, 1, 0.7, 9)[0]
    st_ = init_state(6, 5, TrackerParams(2, lam=0.85, mu=0.01), seed=2)
    b = solve_weights(st_, s)
    A, _ = update_row_factors(st_, s, b)
    p = st_.params
    dmu = p.mu - p.lam * st_.prev_mu
    for l in reversed(range(6)):
        a_prev = st_.model.A[l]
        RA = p.lam * st_.RA[l] + dmu * np.eye(2)
        rhs = -dmu * a_prev
        for w in range(5):
            if s.mask[l, w]:
                alpha = b * st_.model.C[w]
                RA += np.outer(alpha, alpha)
                rhs += (s.values[l, w] - alpha @ a_prev) * alpha
        a_new = a_prev + scipy.linalg.cho_solve(scipy.linalg.cho_factor(RA), rhs)
        np.testing.assert_allclose(A[l], a_new, rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    lam=st.floats(0.5, 1.0),
    rho=st.floats(0.05, 1.0),
    R=st.integers(1, 3),
)
def test_spd_preserved(seed, lam, rho, R):
    slices = random_stream(6, 5, R, 8, rho, seed, noise=0.01)
    tr = OlstecTracker(6, 5, TrackerParams(R, lam=lam, mu=1e-6), seed=seed)
    for s in slices:
        tr.step(s)
        np.linalg.cholesky(tr.state.RA)
        np.linalg.cholesky(tr.state.RC)
        np.testing.assert_array_equal(tr.state.RA, np.swapaxes(tr.state.RA, 1, 2))
        assert tr.model.is_finite()
    assert tr.state.t == 8


def test_step_is_transactional():
    slices = random_stream(4, 4, 2, 2, 1.0, 0)
    tr = OlstecTracker(4, 4, TrackerParams(2), seed=0)
    tr.step(slices[0])
    before = tr.state.copy()
    tr.state.RA[1] = -np.eye(2)  # break SPD for row 1
    before.RA[1] = -np.eye(2)
    with pytest.raises(ConditioningError) as info:
        tr.step(slices[1])
    assert info.value.index == 1 and info.value.axis == "row" and info.value.t == 1
    np.testing.assert_array_equal(tr.state.model.A, before.model.A)
    np.testing.assert_array_equal(tr.state.RA, before.RA)
    assert tr.state.t == before.t


def test_step_rejects_wrong_shape():
    tr = OlstecTracker(4, 4, TrackerParams(2))
    with pytest.raises(StructuralError):
        tr.step(MaskedSlice.full(np.ones((3, 4))))


def test_zero_slice_gives_zero_estimate():
    tr = OlstecTracker(4, 5, TrackerParams(2))
    X, b = tr.step(MaskedSlice.full(np.zeros((4, 5))))
    np.testing.assert_array_equal(b, 0.0)
    np.testing.assert_array_equal(X, 0.0)


def test_estimate_uses_pre_update_factors():
    s = random_stream(5, 5, 2, 1, 0.8, 1)[0]
    tr = OlstecTracker(5, 5, TrackerParams(2), seed=1)
    A0, C0 = tr.model.A.copy(), tr.model.C.copy()
    X, b = tr.step(s)
    np.testing.assert_allclose(X, reconstruct_slice(FactorModel(A0, C0, b)), rtol=1e-15)
    tr2 = OlstecTracker(5, 5, TrackerParams(2), seed=1)
    Xpost, _ = tr2.step(s, post_update=True)
    np.testing.assert_allclose(Xpost, reconstruct_slice(tr2.model), rtol=1e-15)


def test_identical_full_slices_converge():
    rng = np.random.default_rng(3)
    A, C = rng.standard_normal((8, 2)), rng.standard_normal((7, 2))
    Y = MaskedSlice.full((A * rng.standard_normal(2)) @ C.T)
    tr = OlstecTracker(8, 7, TrackerParams(2, lam=1.0), seed=1)
    res = np.array([masked_residual(Y, tr.step(Y)[0]) for _ in range(50)])
    assert np.all(np.diff(res[2:]) <= 0)
    assert res[-1] < 1e-4 * res[0]


def test_history_sink():
    slices = random_stream(4, 4, 2, 3, 1.0, 0)
    tr = OlstecTracker(4, 4, TrackerParams(2), record_history=True)
    bs = [tr.step(s)[1] for s in slices]
    assert len(tr.history) == 3
    np.testing.assert_array_equal(tr.history[2], bs[2])


def test_determinism_bit_identical():
    slices = random_stream(6, 6, 2, 10, 0.5, 4, noise=0.01)
    out = []
    for _ in range(2):
        tr = OlstecTracker(6, 6, TrackerParams(2), seed=9)
        out.append(np.array([tr.step(s)[0] for s in slices]))
    assert out[0].tobytes() == out[1].tobytes()
