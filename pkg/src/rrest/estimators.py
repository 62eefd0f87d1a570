"""Linear estimators built from the (perturbed) array response matrix.

Four constructions are provided, each returning an :class:`EstimatorMatrix`:

* :func:`mmse`: Wiener filter ``H^T (H H^T + eps I)^-1``
* :func:`r_mmse`: the Wiener filter projected onto the leading ``r``
  right singular vectors
* :func:`r_svd`: truncated pseudoinverse keeping ``r`` spectral channels
* :func:`ridge`: ``(H^T H + eta I)^-1 H^T``

The classes at the bottom wrap them in the scikit-learn estimator protocol:
``fit`` receives the assumed array response matrix and ``transform`` maps
observation rows ``y`` (shape ``(n_samples, n)``) to estimates of ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import BadEta, BadRank, DimensionMismatch, SolveFailure
from .model import as_matrix, decompose, matrix_from_json, matrix_to_json

KINDS = ("mmse", "rmmse", "rsvd", "ridge")


@dataclass(frozen=True)
class EstimatorMatrix:
    kind: str
    w: np.ndarray
    r: Optional[int] = None
    eta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "ridge" and not (self.eta is not None and self.eta > 0):
            raise BadEta(f"ridge estimator needs eta > 0, got {self.eta}")

    @property
    def shape(self):
        return self.w.shape

    def to_json(self):
        out = {"kind": self.kind, "w": matrix_to_json(self.w)}
        if self.r is not None:
            out["r"] = int(self.r)
        if self.eta is not None:
            out["eta"] = float(self.eta)
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(obj["kind"], matrix_from_json(obj["w"]), obj.get("r"), obj.get("eta"))


def _check_rank(r, m):
    if not (isinstance(r, (int, np.integer)) and 1 <= r < m):
        raise BadRank(f"rank constraint must satisfy 1 <= r < m={m}, got {r!r}")
    return int(r)


def _spd_solve(a, b):
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def mmse(h_pert, epsilon) -> EstimatorMatrix:
    """Wiener filter for the assumed model ``y = h_pert x + sqrt(eps) n``."""
    h = as_matrix(h_pert, "h_pert")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    n = h.shape[0]
    gram = h @ h.T + epsilon * np.eye(n)
    # gram is symmetric, so W = (gram^-1 H)^T
    w = _spd_solve(gram, h).T
    return EstimatorMatrix("mmse", w)


def r_mmse(h_pert, epsilon, r) -> EstimatorMatrix:
    """Rank-``r`` MMSE estimator ``V_r diag(x_i) U_r^T``, ``x_i = s_i/(s_i^2+eps)``."""
    h = as_matrix(h_pert, "h_pert")
    r = _check_rank(r, h.shape[1])
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    svd = decompose(h)
    s = svd.singulars[:r]
    gains = s / (s**2 + epsilon)
    w = (svd.right[:, :r] * gains) @ svd.left[:, :r].T
    return EstimatorMatrix("rmmse", w, r=r)


def r_svd(h_pert, r) -> EstimatorMatrix:
    """Truncated SVD estimator ``V_r diag(1/s_i) U_r^T``."""
    h = as_matrix(h_pert, "h_pert")
    r = _check_rank(r, h.shape[1])
    svd = decompose(h)
    w = (svd.right[:, :r] / svd.singulars[:r]) @ svd.left[:, :r].T
    return EstimatorMatrix("rsvd", w, r=r)


def ridge(h_pert, eta) -> EstimatorMatrix:
    h = as_matrix(h_pert, "h_pert")
    if not (np.isfinite(eta) and eta > 0):
        raise BadEta(f"eta must be positive, got {eta}")
    m = h.shape[1]
    w = _spd_solve(h.T @ h + eta * np.eye(m), h.T)
    return EstimatorMatrix("ridge", w, eta=float(eta))


def apply(est, y):
    """Estimate ``x`` from observation(s) ``y``; columns of a 2-D ``y`` are
    treated as separate observations."""
    w = est.w if isinstance(est, EstimatorMatrix) else np.asarray(est, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim not in (1, 2) or y.shape[0] != w.shape[1]:
        raise DimensionMismatch(f"estimator expects length-{w.shape[1]} observations, got shape {y.shape}")
    return w @ y


def numerical_rank(w, rtol=1e-10):
    s = np.linalg.svd(np.asarray(w, dtype=float), compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


# --- scikit-learn wrappers -------------------------------------------------


class _ArrayResponseEstimator(TransformerMixin, BaseEstimator):
    """Shared ``fit``/``transform`` logic; subclasses implement ``_build``."""

    def _build(self, h):
        raise NotImplementedError

    def fit(self, X, y=None):
        """Construct the estimator matrix from the array response ``X`` (n x m).

        ``y`` is ignored and exists for pipeline compatibility.
        """
        h = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
        self.estimator_ = self._build(h)
        self.coef_ = self.estimator_.w
        self.n_features_in_ = h.shape[0]
        self.n_components_ = h.shape[1]
        return self

    def transform(self, X):
        """Map observation rows (n_samples, n) to estimates (n_samples, m)."""
        check_is_fitted(self, "coef_")
        Y = check_array(X, dtype=np.float64)
        if Y.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"observations have {Y.shape[1]} entries, estimator expects {self.n_features_in_}"
            )
        return Y @ self.coef_.T

    def predict(self, X):
        return self.transform(X)

    def mse(self, truth):
        """Exact mean-square error of the fitted estimator against ``truth``."""
        from .mse_analysis import mse_exact

        check_is_fitted(self, "coef_")
        return mse_exact(self.estimator_, truth)


class WienerEstimator(_ArrayResponseEstimator):
    def __init__(self, epsilon=1.0):
        self.epsilon = epsilon

    def _build(self, h):
        return mmse(h, self.epsilon)


class ReducedRankWienerEstimator(_ArrayResponseEstimator):
    def __init__(self, epsilon=1.0, rank=1):
        self.epsilon = epsilon
        self.rank = rank

    def _build(self, h):
        return r_mmse(h, self.epsilon, self.rank)


class TruncatedSVDEstimator(_ArrayResponseEstimator):
    def __init__(self, rank=1):
        self.rank = rank

    def _build(self, h):
        return r_svd(h, self.rank)


class RidgeEstimator(_ArrayResponseEstimator):
    def __init__(self, eta=1.0):
        self.eta = eta

    def _build(self, h):
        return ridge(h, self.eta)


def build(kind, h_pert, epsilon=None, r=None, eta=None) -> EstimatorMatrix:
    """Dispatch on ``kind`` ('mmse', 'rmmse', 'rsvd', 'ridge')."""
    if kind == "mmse":
        return mmse(h_pert, epsilon)
    if kind == "rmmse":
        return r_mmse(h_pert, epsilon, r)
    if kind == "rsvd":
        return r_svd(h_pert, r)
    if kind == "ridge":
        return ridge(h_pert, eta)
    raise ValueError(f"unknown estimator kind {kind!r}")
