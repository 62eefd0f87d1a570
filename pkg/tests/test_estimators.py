import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrest import estimators as est
from rrest.exceptions import BadEta, BadRank, DimensionMismatch, SolveFailure


def _tall(seed, m_max=8):
    g = np.random.default_rng(seed)
    m = int(g.integers(2, m_max + 1))
    n = m + int(g.integers(0, 4))
    return g.standard_normal((n, m)), g


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0))
def test_mmse_matches_push_through_form(seed, eps):
    h, _ = _tall(seed)
    m = h.shape[1]
    w = est.mmse(h, eps).w
    # (H^T H + eps I)^-1 H^T is the same matrix as H^T (H H^T + eps I)^-1
    oracle = np.linalg.solve(h.T @ h + eps * np.eye(m), h.T)
    np.testing.assert_allclose(w, oracle, atol=1e-10 * max(1.0, np.abs(oracle).max()))


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0))
def test_rmmse_projects_mmse_onto_leading_right_space(seed, eps):
    h, g = _tall(seed)
    m = h.shape[1]
    r = int(g.integers(1, m))
    _, _, vt = np.linalg.svd(h)
    vr = vt[:r].T
    full = est.mmse(h, eps).w
    reduced = est.r_mmse(h, eps, r)
    np.testing.assert_allclose(reduced.w, vr @ vr.T @ full, atol=1e-10)
    assert est.numerical_rank(reduced.w) == r
    assert reduced.r == r


@given(st.integers(0, 2**32 - 1))
def test_rsvd_is_truncated_pseudoinverse(seed):
    h, g = _tall(seed)
    m = h.shape[1]
    r = int(g.integers(1, m))
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    s_trunc = np.where(np.arange(m) < r, s, 0.0)
    oracle = np.linalg.pinv((u * s_trunc) @ vt)
    np.testing.assert_allclose(est.r_svd(h, r).w, oracle, atol=1e-9 * max(1.0, np.abs(oracle).max()))


def test_rsvd_limit_of_rmmse(rng):
    h = rng.standard_normal((5, 4))
    np.testing.assert_allclose(est.r_mmse(h, 1e-14, 2).w, est.r_svd(h, 2).w, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0))
def test_ridge_equals_mmse_at_eta_eps(seed, eps):
    h, _ = _tall(seed)
    np.testing.assert_allclose(est.ridge(h, eps).w, est.mmse(h, eps).w, atol=1e-10)


def test_ridge_solves_normal_equations(rng):
    h = rng.standard_normal((6, 3))
    w = est.ridge(h, 0.3).w
    np.testing.assert_allclose((h.T @ h + 0.3 * np.eye(3)) @ w, h.T, atol=1e-12)


def test_shapes_and_rank_errors(rng):
    h = rng.standard_normal((5, 3))
    assert est.mmse(h, 0.1).shape == (3, 5)
    for bad in (0, 3, 4, -1):
        with pytest.raises(BadRank):
            est.r_mmse(h, 0.1, bad)
        with pytest.raises(BadRank):
            est.r_svd(h, bad)
    with pytest.raises(BadEta):
        est.ridge(h, 0.0)
    with pytest.raises(BadEta):
        est.ridge(h, -1.0)
    with pytest.raises(ValueError):
        est.mmse(h, 0.0)


def test_solve_failure_on_indefinite_system():
    with pytest.raises(SolveFailure):
        est._spd_solve(-np.eye(2), np.ones((2, 1)))


def test_apply_handles_vectors_and_blocks(rng):
    h = rng.standard_normal((4, 2))
    e = est.mmse(h, 0.1)
    y = rng.standard_normal(4)
    np.testing.assert_allclose(est.apply(e, y), e.w @ y)
    ys = rng.standard_normal((4, 7))
    assert est.apply(e, ys).shape == (2, 7)
    with pytest.raises(DimensionMismatch):
        est.apply(e, np.ones(3))


def test_estimator_json_roundtrip(rng):
    h = rng.standard_normal((4, 3))
    for e in (est.mmse(h, 0.1), est.r_mmse(h, 0.1, 2), est.r_svd(h, 1), est.ridge(h, 0.5)):
        back = est.EstimatorMatrix.from_json(json.loads(json.dumps(e.to_json())))
        assert back.kind == e.kind and back.r == e.r and back.eta == e.eta
        np.testing.assert_array_equal(back.w, e.w)
    assert "eta" not in est.mmse(h, 0.1).to_json()


def test_build_dispatch(rng):
    h = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(est.build("rsvd", h, r=2).w, est.r_svd(h, 2).w)
    with pytest.raises(ValueError):
        est.build("lasso", h)
    with pytest.raises(ValueError):
        est.EstimatorMatrix("lasso", np.eye(2))
