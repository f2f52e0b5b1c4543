import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from koopprune.eigupdate import (
    DiagPlusRankOne,
    ThinQr,
    canonical_eigen_order,
    incremental_qr_update,
    orthonormality_residual,
    reorthonormalize,
    secular_eigen,
    thin_qr,
)
from koopprune.errors import InvalidInputError, PreconditionError, RankDeficiencyError

from conftest import subspace_gap


def _check_pairs(problem, pairs, tol=1e-12):
    m = problem.dense()
    scale = problem.scale()
    vals, vecs = pairs.values, pairs.vectors
    assert np.all(np.diff(vals) >= 0)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(vals.size), atol=tol)
    assert np.max(np.abs(m @ vecs - vecs * vals)) <= tol * max(scale, 1.0)


def test_update_confined_to_first_coordinate():
    pairs = secular_eigen(DiagPlusRankOne([1.0, 2.0, 3.0], [1.0, 0.0, 0.0]))
    np.testing.assert_allclose(pairs.values, [2.0, 2.0, 3.0], atol=1e-14)
    # The two vectors for the double eigenvalue 2 span {e1, e2}.
    np.testing.assert_allclose(np.abs(pairs.vectors[:, 2]), [0, 0, 1], atol=1e-14)
    np.testing.assert_allclose(np.abs(pairs.vectors[2, :2]), 0, atol=1e-14)


def test_zero_update_returns_identity():
    pairs = secular_eigen(DiagPlusRankOne([5.0, 7.0], [0.0, 0.0]))
    np.testing.assert_array_equal(pairs.values, [5.0, 7.0])
    np.testing.assert_array_equal(pairs.vectors, np.eye(2))


def test_random_8x8_seed_42_matches_dense_solver():
    rng = np.random.default_rng(42)
    problem = DiagPlusRankOne(rng.standard_normal(8), rng.standard_normal(8))
    pairs = secular_eigen(problem)
    ref_vals, ref_vecs = np.linalg.eigh(problem.dense())
    np.testing.assert_allclose(pairs.values, ref_vals, atol=1e-10)
    signs = np.sign(np.sum(pairs.vectors * ref_vecs, axis=0))
    np.testing.assert_allclose(pairs.vectors * signs, ref_vecs, atol=1e-10)


def test_unsorted_and_negative_diagonal():
    problem = DiagPlusRankOne([3.0, -1.0, 0.5, 10.0], [0.3, -2.0, 0.0, 1.0])
    pairs = secular_eigen(problem)
    _check_pairs(problem, pairs)
    np.testing.assert_allclose(pairs.values, np.linalg.eigvalsh(problem.dense()), atol=1e-13)


def test_clustered_diagonal_is_deflated():
    d = np.array([0.1, 0.1 + 1e-15, 0.1 + 2e-15, 0.5, 0.5 + 1e-13, 0.9])
    b = np.array([0.2, 0.3, 0.1, 1e-17, 0.4, 0.5])
    problem = DiagPlusRankOne(d, b)
    pairs = secular_eigen(problem)
    _check_pairs(problem, pairs)
    np.testing.assert_allclose(pairs.values, np.linalg.eigvalsh(problem.dense()), atol=1e-14)


def test_empty_problem():
    pairs = secular_eigen(DiagPlusRankOne([], []))
    assert pairs.values.size == 0 and pairs.vectors.shape == (0, 0)


@pytest.mark.parametrize("d,b", [([1.0, np.nan], [1.0, 0.0]), ([1.0, 2.0], [np.inf, 0.0])])
def test_non_finite_input_rejected(d, b):
    with pytest.raises(InvalidInputError):
        DiagPlusRankOne(d, b)


def test_length_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        DiagPlusRankOne([1.0, 2.0], [1.0])


def test_nonpositive_tolerance_rejected():
    with pytest.raises(InvalidInputError):
        secular_eigen(DiagPlusRankOne([1.0], [1.0]), tol=0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 24).flatmap(
        lambda m: st.tuples(
            arrays(float, m, elements=st.floats(-10, 10)),
            arrays(float, m, elements=st.floats(-3, 3)),
        )
    )
)
def test_property_interlacing_and_trace(db):
    d, b = db
    problem = DiagPlusRankOne(d, b)
    pairs = secular_eigen(problem)
    scale = max(problem.scale(), 1.0)
    _check_pairs(problem, pairs, tol=1e-11)
    np.testing.assert_allclose(pairs.values.sum(), d.sum() + b @ b, atol=1e-12 * scale * d.size)
    ds = np.sort(d)
    lam = pairs.values
    slack = 1e-12 * scale
    assert np.all(lam >= ds - slack)
    assert np.all(lam[:-1] <= ds[1:] + slack)


def test_canonical_order_breaks_ties_deterministically():
    vals = np.array([1.0, 1.0, 0.0])
    vecs = np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    v1, e1 = canonical_eigen_order(vals, vecs)
    v2, e2 = canonical_eigen_order(vals[[1, 0, 2]], vecs[:, [1, 0, 2]])
    np.testing.assert_array_equal(v1, [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(e1, e2)
    assert np.all(e1.max(axis=0) > 0)


# --------------------------------------------------------------------------
# incremental QR
# --------------------------------------------------------------------------


def test_drop_last_column_is_column_subset():
    rng = np.random.default_rng(0)
    qr = thin_qr(rng.standard_normal((30, 5)))
    t = np.vstack([np.eye(4), np.zeros((1, 4))])
    new = incremental_qr_update(qr, t)
    ref = thin_qr(qr.product()[:, :4])
    np.testing.assert_allclose(new.q, ref.q, atol=1e-12)
    np.testing.assert_allclose(new.r, ref.r, atol=1e-12)


def test_orthogonal_completion_seed_7():
    rng = np.random.default_rng(7)
    n, s = 50, 6
    qr = thin_qr(rng.standard_normal((n, s)))
    full, _ = np.linalg.qr(rng.standard_normal((s, s)))
    t = full[:, : s - 1]
    new = incremental_qr_update(qr, t)
    assert orthonormality_residual(new.q) <= 1e-12
    direct_q, direct_r = np.linalg.qr(qr.product() @ t)
    signs = np.sign(np.diag(direct_r))
    np.testing.assert_allclose(new.q, direct_q * signs, atol=1e-12)
    np.testing.assert_allclose(new.product(), qr.product() @ t, atol=1e-12)


def test_identity_factor_gives_r_of_t_seed_3():
    rng = np.random.default_rng(3)
    n, s = 20, 5
    qr = ThinQr(np.eye(n, s), np.eye(s))
    t = rng.standard_normal((s, s - 1))
    new = incremental_qr_update(qr, t)
    _, r_t = np.linalg.qr(t)
    np.testing.assert_allclose(new.r, r_t * np.sign(np.diag(r_t))[:, None], atol=1e-13)


def test_rank_deficient_transform_names_column():
    qr = thin_qr(np.random.default_rng(1).standard_normal((10, 3)))
    t = np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(RankDeficiencyError) as info:
        incremental_qr_update(qr, t)
    assert info.value.column == 1


def test_transform_shape_checked():
    qr = thin_qr(np.eye(4, 3))
    with pytest.raises(InvalidInputError):
        incremental_qr_update(qr, np.eye(2))


# --------------------------------------------------------------------------
# re-orthonormalisation
# --------------------------------------------------------------------------


def test_orthonormal_input_is_fixed_point():
    q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((40, 6)))
    out = reorthonormalize(q)
    assert np.max(np.abs(out - q)) <= 1e-14


def test_perturbed_basis_seed_1():
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.standard_normal((60, 8)))
    noisy = q + 1e-6 * rng.standard_normal(q.shape)
    out = reorthonormalize(noisy)
    assert orthonormality_residual(out) <= 1e-12
    assert subspace_gap(out, noisy) <= 1e-10


def test_duplicated_column_rejected():
    q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((10, 3)))
    with pytest.raises(PreconditionError):
        reorthonormalize(np.column_stack([q, q[:, 0]]))
