import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tnvault.errors import InvalidThreshold, NumericalFailure, ShapeMismatch
from tnvault.linalg import (
    frame_truncation,
    lq_factor,
    sample_perturbation,
    svd,
    svd_of_product,
    truncated_svd,
)

matrices = hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8).flatmap(
    lambda s: hnp.arrays(np.float64, s, elements=st.floats(-100, 100, allow_nan=False))
)


def test_identity_fixed_rank():
    res = truncated_svd(np.eye(3), rank=3)
    assert np.array_equal(res.S, [1.0, 1.0, 1.0])


def test_rel_tol_rank_on_constructed_matrix():
    rng = np.random.default_rng(0)
    q1, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    q2, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    m = (q1 * np.array([10.0, 1.0, 0, 0, 0])) @ q2.T
    # tail after one triple is 1 > 0.05^2 * 101, after two it is ~0
    assert truncated_svd(m, rel_tol=0.05).rank == 2
    assert truncated_svd(m, rel_tol=0.2).rank == 1


@settings(max_examples=60, deadline=None)
@given(matrices, st.floats(0.01, 0.99))
def test_rel_tol_bound(m, tol):
    res = truncated_svd(m, rel_tol=tol)
    err = np.linalg.norm(m - res.product())
    assert err <= tol * np.linalg.norm(m) + 1e-12 * max(1.0, np.linalg.norm(m))
    assert res.rank >= 1


@settings(max_examples=30, deadline=None)
@given(matrices)
def test_svd_orthonormal_and_sign_convention(m):
    res = truncated_svd(m, rank=min(m.shape))
    r = res.rank
    assert np.allclose(res.U.T @ res.U, np.eye(r), atol=1e-10)
    assert np.allclose(res.V.T @ res.V, np.eye(r), atol=1e-10)
    assert np.all(np.diff(res.S) <= 1e-12 * max(1.0, res.S[0]))
    idx = np.argmax(np.abs(res.U), axis=0)
    assert np.all(res.U[idx, np.arange(r)] >= 0)


def test_svd_deterministic():
    m = np.random.default_rng(1).standard_normal((7, 4))
    a, b = truncated_svd(m, rel_tol=0.1), truncated_svd(m, rel_tol=0.1)
    assert np.array_equal(a.U, b.U) and np.array_equal(a.S, b.S) and np.array_equal(a.V, b.V)


def test_svd_errors():
    with pytest.raises(ShapeMismatch):
        svd(np.zeros((0, 3)))
    with pytest.raises(NumericalFailure):
        svd(np.array([[np.nan, 1.0]]))
    with pytest.raises(InvalidThreshold):
        truncated_svd(np.eye(2), rel_tol=1.5)


def test_svd_of_product_matches_direct():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((9, 3)), rng.standard_normal((3, 11))
    u, s, vt = svd_of_product(a, b)
    u2, s2, vt2 = svd(a @ b)
    assert np.allclose(s, s2[:3], rtol=1e-12)
    assert np.allclose((u * s) @ vt, a @ b, atol=1e-12)
    assert np.allclose(u[:, :3], u2[:, :3], atol=1e-10)


def test_lq_examples():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((3, 7))
    l, q = lq_factor(m)
    assert np.linalg.norm(m - l @ q) <= 1e-10 * np.linalg.norm(m)
    assert np.allclose(q @ q.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.triu(l, 1), 0)
    l, _ = lq_factor(np.array([[2.0, 0.0], [0.0, 3.0]]))
    assert np.allclose(np.abs(l), np.diag([2.0, 3.0]))
    q0, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    l, _ = lq_factor(q0.T)
    assert np.allclose(np.abs(l), np.eye(3), atol=1e-12)


def test_sample_perturbation():
    rec = sample_perturbation(5, 0.05, 42, step=1)
    assert rec.values.shape == (5,)
    assert np.all((rec.values >= 0.05) & (rec.values <= 1.0))
    assert np.array_equal(rec.values, sample_perturbation(5, 0.05, 42, step=1).values)
    assert not np.array_equal(rec.values, sample_perturbation(5, 0.05, 42, step=2).values)
    assert np.array_equal(sample_perturbation(4, 1.0, 7).values, np.ones(4))
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(InvalidThreshold):
            sample_perturbation(3, bad, 1)


def test_perturbation_cancels():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((6, 5))
    u, s, vt = svd(m)
    d = sample_perturbation(5, 0.05, 9).values
    left = u / d[None, :]
    right = (d * s)[:, None] * vt
    assert np.linalg.norm(left @ right - m) <= 1e-12 * np.linalg.norm(m)


def test_frame_truncation_without_frame_is_plain_tsvd():
    m = np.random.default_rng(5).standard_normal((8, 6))
    ft = frame_truncation(m, None, 0.3)
    ref = truncated_svd(m, rel_tol=0.3)
    assert ft.rank == ref.rank
    assert np.allclose(ft.coeff, ref.S[:, None] * ref.Vt)


def test_frame_truncation_error_is_exact():
    # the left interface X has Gram P^T P; the reported tail must equal the
    # true error of X (U_r C) against X m
    rng = np.random.default_rng(6)
    R, I, cols = 3, 4, 5
    p = np.triu(rng.uniform(0.5, 2.0, (R, R)))
    m = rng.standard_normal((R * I, cols))
    ft = frame_truncation(m, [p], 0.4)
    approx = ft.core @ ft.coeff

    def apply(x):
        return (p @ x.reshape(R, -1, order="F")).reshape(x.shape, order="F")

    err2 = np.linalg.norm(apply(m - approx)) ** 2
    assert np.isclose(err2, ft.err2, rtol=1e-10, atol=1e-12)
    assert err2 <= 0.4**2 * np.linalg.norm(apply(m)) ** 2 + 1e-12
