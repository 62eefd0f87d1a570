"""Stochastic linear model ``y = H x + sqrt(eps) n`` and its perturbed twin.

Holds the SVD plumbing (with deterministic sign convention), the SNR, the
alignment matrices between the true and perturbed singular bases, and the
classification of a (model, perturbation) pair as ill-conditioned with high
SNR.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import BadRank, DegenerateSpectrum, DimensionMismatch, RankDeficient

DISTINCT_GAP = 1e-9
RANK_FLOOR = 1e-300
TRAILING_SLACK = 1e-9


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array or raise ``ValueError``."""
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def matrix_to_json(a):
    a = np.asarray(a, dtype=float)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [float(v) for v in a.ravel()]}


def matrix_from_json(obj):
    rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    if rows <= 0 or cols <= 0 or len(data) != rows * cols:
        raise ValueError(f"matrix payload {rows}x{cols} does not match {len(data)} entries")
    return as_matrix(np.asarray(data, dtype=float).reshape(rows, cols))


@dataclass(frozen=True)
class SvdTriple:
    """Full SVD ``a = left @ diag(singulars) @ right.T`` with canonical signs.

    ``left`` is n x n, ``right`` is m x m and ``singulars`` is strictly
    decreasing.
    """

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    @property
    def thin_left(self):
        return self.left[:, : self.singulars.size]

    def reconstruct(self):
        return (self.thin_left * self.singulars) @ self.right.T


def _canonical_signs(mat):
    # +1/-1 per column so that the largest-magnitude entry is positive
    idx = np.argmax(np.abs(mat), axis=0)
    signs = np.sign(mat[idx, np.arange(mat.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def decompose(a) -> SvdTriple:
    """SVD of a tall full-column-rank matrix with distinct singular values.

    Each left singular vector is flipped so that its largest-magnitude entry
    is positive and the matching right vector is flipped with it, which makes
    the factors (and everything built on them) deterministic.

    Raises
    ------
    RankDeficient
        If the smallest singular value is ``<= RANK_FLOOR``.
    DegenerateSpectrum
        If two consecutive singular values have relative gap below
        ``DISTINCT_GAP`` (relative to the largest one).
    """
    a = as_matrix(a)
    n, m = a.shape
    if n < m:
        raise DimensionMismatch(f"expected a tall matrix (n >= m), got {n}x{m}")
    left, s, right_t = np.linalg.svd(a, full_matrices=True)
    right = right_t.T
    if s[-1] <= RANK_FLOOR:
        raise RankDeficient(f"smallest singular value {s[-1]:.3e} is at the rank floor")
    if m > 1 and np.min(-np.diff(s)) / s[0] < DISTINCT_GAP:
        raise DegenerateSpectrum(f"singular values {s} are not distinct")
    signs = _canonical_signs(left[:, :m])
    left[:, :m] *= signs
    right *= signs
    if n > m:
        left[:, m:] *= _canonical_signs(left[:, m:])
    return SvdTriple(left=left, singulars=s, right=right)


@dataclass(frozen=True)
class LinearModel:
    """True model ``y = h x + sqrt(epsilon) n`` with white ``x`` and ``n``."""

    h: np.ndarray
    epsilon: float

    def __post_init__(self):
        h = as_matrix(self.h, "h")
        n, m = h.shape
        if n < m:
            raise DimensionMismatch(f"h must be n x m with n >= m, got {n}x{m}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if np.linalg.svd(h, compute_uv=False)[-1] <= RANK_FLOOR:
            raise RankDeficient("h must have full column rank")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n(self):
        return self.h.shape[0]

    @property
    def m(self):
        return self.h.shape[1]


def snr(model: LinearModel) -> float:
    """Signal-to-noise ratio ``tr(H H^T) / (n eps)`` (linear scale)."""
    gammas = np.linalg.svd(model.h, compute_uv=False)
    return float(np.sum(gammas**2) / (model.n * model.epsilon))


def snr_db(model: LinearModel) -> float:
    return 10.0 * np.log10(snr(model))


@dataclass(frozen=True)
class PerturbedPair:
    """A true model, the perturbation of its array response, and rank ``r``.

    Use :meth:`build` rather than calling the constructor directly; it
    computes and caches both SVDs and the alignment matrices
    ``k_align = U^T M`` and ``l_align = N^T V``.
    """

    base: LinearModel
    delta: np.ndarray
    r: int
    kappa: float
    base_svd: SvdTriple = field(repr=False)
    pert_svd: SvdTriple = field(repr=False)
    k_align: np.ndarray = field(repr=False)
    l_align: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, h, delta, epsilon, r, kappa=1.75):
        base = LinearModel(h, epsilon)
        delta = as_matrix(delta, "delta")
        if delta.shape != base.h.shape:
            raise DimensionMismatch(f"delta shape {delta.shape} != h shape {base.h.shape}")
        m = base.m
        r = int(r)
        if not 1 <= r < m:
            raise BadRank(f"r must satisfy 1 <= r < m={m}, got {r}")
        if not kappa > 1:
            raise ValueError(f"kappa must exceed 1, got {kappa}")
        base_svd = decompose(base.h)
        pert_svd = decompose(base.h + delta)
        k_align = pert_svd.left.T @ base_svd.left
        l_align = base_svd.right.T @ pert_svd.right
        return cls(base, delta, r, float(kappa), base_svd, pert_svd, k_align, l_align)

    @classmethod
    def from_json(cls, obj):
        return cls.build(
            matrix_from_json(obj["h"]),
            matrix_from_json(obj["delta"]),
            float(obj["epsilon"]),
            int(obj["r"]),
            float(obj.get("kappa", 1.75)),
        )

    def to_json(self):
        return {
            "h": matrix_to_json(self.base.h),
            "delta": matrix_to_json(self.delta),
            "epsilon": self.base.epsilon,
            "r": self.r,
            "kappa": self.kappa,
        }

    @property
    def h_pert(self):
        return self.base.h + self.delta

    @property
    def epsilon(self):
        return self.base.epsilon

    @property
    def n(self):
        return self.base.n

    @property
    def m(self):
        return self.base.m

    @property
    def gammas(self):
        return self.base_svd.singulars

    @property
    def sigmas(self):
        return self.pert_svd.singulars

    @property
    def delta_norm(self):
        return float(np.linalg.norm(self.delta, 2))


def alignment_matrices(pair: PerturbedPair):
    """Return ``(K, L)`` with ``K = U^T M`` (n x n) and ``L = N^T V`` (m x m)."""
    return pair.k_align, pair.l_align


class Separation(NamedTuple):
    separated: bool
    intervals: list


def pairwise_separation(gammas, delta_norm, r) -> Separation:
    """Separation test on raw spectra; see :func:`check_pairwise_separated`."""
    g = np.asarray(gammas, dtype=float)[:r]
    root2 = np.sqrt(2.0)
    intervals = [(gi - delta_norm, gi + root2 * delta_norm) for gi in g]
    ok = bool(g[-1] > delta_norm)
    # intervals are ordered by decreasing gamma, so neighbours suffice
    for (lo_hi, hi_lo) in zip(intervals[:-1], intervals[1:]):
        if not hi_lo[1] < lo_hi[0]:
            ok = False
    return Separation(ok, intervals)


def check_pairwise_separated(pair: PerturbedPair) -> Separation:
    """True iff ``gamma_r > ||dH||_2`` and the leading ``r`` perturbation
    intervals ``[gamma_i - ||dH||, gamma_i + sqrt(2) ||dH||]`` are disjoint."""
    return pairwise_separation(pair.gammas, pair.delta_norm, pair.r)


class Verdict(NamedTuple):
    satisfied: bool
    violated: tuple

    def __bool__(self):
        return self.satisfied


def classify_spectra(gammas, sigmas, delta_norm, epsilon, r, kappa) -> Verdict:
    """Check the three ill-conditioned/high-SNR conditions on raw spectra.

    1. leading ``r`` singular values pairwise separated,
    2. ``gamma_i, sigma_i > kappa sqrt(eps)`` for ``i <= r``,
    3. ``gamma_i, sigma_i <= sqrt(eps)`` for ``i > r`` (inclusive, with a
       relative slack of ``TRAILING_SLACK``).
    """
    g = np.asarray(gammas, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    root_eps = np.sqrt(epsilon)
    failed = []
    if not pairwise_separation(g, delta_norm, r).separated:
        failed.append(1)
    if not (np.all(g[:r] > kappa * root_eps) and np.all(s[:r] > kappa * root_eps)):
        failed.append(2)
    ceiling = root_eps * (1.0 + TRAILING_SLACK)
    if not (np.all(g[r:] <= ceiling) and np.all(s[r:] <= ceiling)):
        failed.append(3)
    return Verdict(not failed, tuple(failed))


def classify(pair: PerturbedPair) -> Verdict:
    return classify_spectra(pair.gammas, pair.sigmas, pair.delta_norm, pair.epsilon, pair.r, pair.kappa)
