"""Singular value and singular vector perturbation bounds.

Classical facts (Stewart's singular value envelope, Wedin's and Dopico's
angle bounds) are exposed as evaluators returning both sides of each
inequality, so callers can check them on concrete matrices.  On top of them
sit the separation quantities ``delta_i``/``rho_i``, the diagonal dominance
of the alignment matrices, and the robustness certificate deciding whether
the Wiener filter is provably worse than its rank-``r`` projection.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .exceptions import DefinitionViolated, DimensionMismatch, ZeroGap
from .model import PerturbedPair, as_matrix, classify, decompose


def spectral_norm(e) -> float:
    e = np.asarray(e, dtype=float)
    if not np.any(e):
        return 0.0
    return float(np.linalg.svd(e, compute_uv=False)[0])


def sv_interval(gamma, delta_norm) -> Optional[tuple]:
    """Interval guaranteed to contain the perturbed singular value, or
    ``None`` when ``gamma <= delta_norm``."""
    if not gamma > delta_norm:
        return None
    return (gamma - delta_norm, gamma + np.sqrt(2.0) * delta_norm)


class EnvelopeEntry(NamedTuple):
    lo: float
    hi: float
    holds: bool
    slack: float


def stewart_envelope(a, e, tol=1e-12) -> List[EnvelopeEntry]:
    """Envelope on the squared perturbed singular values of ``a + e``.

    With ``P`` the projector onto range(a)::

        max(s_i - ||P e||, 0)^2 + min_sv(P_perp e)^2 <= s~_i^2
                                  <= (s_i + ||P e||)^2 + ||P_perp e||^2

    ``slack`` is the smaller of the two margins, normalised by ``max(1, hi)``;
    ``holds`` means ``slack >= -tol``.
    """
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    if a.shape != e.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {e.shape} differ")
    n, m = a.shape
    gam = np.linalg.svd(a, compute_uv=False)
    tilde = np.linalg.svd(a + e, compute_uv=False)
    q = np.linalg.svd(a, full_matrices=False)[0]
    pe = q @ (q.T @ e)
    perp = e - pe
    in_norm = spectral_norm(pe)
    if n > m:
        perp_sv = np.linalg.svd(perp, compute_uv=False)
        out_norm, out_min = float(perp_sv[0]), float(perp_sv[-1])
    else:
        out_norm = out_min = 0.0
    entries = []
    for g, t in zip(gam, tilde):
        lo = max(g - in_norm, 0.0) ** 2 + out_min**2
        hi = (g + in_norm) ** 2 + out_norm**2
        slack = min(t**2 - lo, hi - t**2) / max(1.0, hi)
        entries.append(EnvelopeEntry(float(lo), float(hi), bool(slack >= -tol), float(slack)))
    return entries


@dataclass(frozen=True)
class AngleBounds:
    wedin_lhs: float
    wedin_rhs: float
    dopico_lhs: float
    dopico_rhs: Optional[float]
    zeta: float
    delta: float


def angle_bounds(a, e, i, j) -> AngleBounds:
    """Both sides of the Wedin and Dopico bounds for the ``i``-th singular
    pair of ``a`` and the ``j``-th singular pair of ``a + e`` (0-based).

    Raises :class:`ZeroGap` when the Wedin separation is zero.
    ``dopico_rhs`` is ``None`` when ``zeta == 0``.
    """
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    n, m = a.shape
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError(f"indices must lie in [0, {m}), got ({i}, {j})")
    base = decompose(a)
    pert = decompose(a + e)
    alphas = base.singulars
    candidates = np.delete(alphas, i)
    if n > m:
        candidates = np.append(candidates, 0.0)
    tilde_j = pert.singulars[j]
    delta = float(np.min(np.abs(tilde_j - candidates))) if candidates.size else np.inf
    if delta == 0:
        raise ZeroGap(f"Wedin separation vanishes for (i, j) = ({i}, {j})")
    mi, ni = base.left[:, i], base.right[:, i]
    uj, vj = pert.left[:, j], pert.right[:, j]
    resid = float(np.sum((e @ vj) ** 2) + np.sum((e.T @ uj) ** 2))
    wedin_lhs = (1.0 - (mi @ uj) ** 2) + (1.0 - (ni @ vj) ** 2)
    wedin_rhs = resid / delta**2
    dopico_lhs = min(
        np.sum((x * mi - uj) ** 2) + np.sum((x * ni - vj) ** 2) for x in (-1.0, 1.0)
    )
    zeta = min(delta, alphas[i] + tilde_j)
    dopico_rhs = 2.0 * resid / zeta**2 if zeta > 0 else None
    return AngleBounds(float(wedin_lhs), float(wedin_rhs), float(dopico_lhs), dopico_rhs, float(zeta), delta)


@dataclass(frozen=True)
class SeparationData:
    deltas: np.ndarray
    rhos: np.ndarray
    delta_h_norm: float


def separation_from_spectra(gammas, sigmas, delta_norm, r) -> SeparationData:
    """``delta_i`` = distance from ``sigma_i`` to neighbouring base singular
    values (``{gamma_2}`` for ``i = 1``, ``{gamma_{i-1}, gamma_{i+1}}``
    otherwise) and ``rho_i = 1 - ||dH||^2 / delta_i^2`` for ``i <= r``."""
    g = np.asarray(gammas, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    deltas = np.empty(r)
    for i in range(r):
        neighbours = [g[i + 1]] if i == 0 else [g[i - 1], g[i + 1]]
        deltas[i] = min(abs(s[i] - nb) for nb in neighbours)
    with np.errstate(divide="ignore"):
        rhos = 1.0 - delta_norm**2 / deltas**2
    return SeparationData(deltas, rhos, float(delta_norm))


def separation_data(pair: PerturbedPair, require_definition=True) -> SeparationData:
    if require_definition:
        verdict = classify(pair)
        if not verdict.satisfied:
            raise DefinitionViolated(f"conditions {verdict.violated} fail")
    return separation_from_spectra(pair.gammas, pair.sigmas, pair.delta_norm, pair.r)


@dataclass(frozen=True)
class DominanceReport:
    """Per-index slacks (LHS - RHS, so ``>= 0`` means the inequality holds).

    Entries gated on ``rho_i > 1/2`` are NaN where that hypothesis fails;
    ``gated[i]`` records whether it holds.
    """

    slacks: dict
    gated: np.ndarray
    rhos: np.ndarray

    @property
    def min_slack(self):
        vals = np.concatenate([np.asarray(v)[~np.isnan(v)] for v in self.slacks.values()])
        return float(vals.min()) if vals.size else np.inf


def diagonal_dominance_report(pair: PerturbedPair, require_definition=True) -> DominanceReport:
    sep = separation_data(pair, require_definition)
    r, m = pair.r, pair.m
    k, l = pair.k_align, pair.l_align
    rho = sep.rhos
    kd = np.diag(k)[:r]
    ld = np.diag(l)[:r]
    gated = rho > 0.5
    tail_cap = 2.0 * (1.0 - rho)
    floor = 2.0 * rho - 1.0

    def gate(v):
        return np.where(gated, v, np.nan)

    k_row = np.array([np.sum(k[i, :] ** 2) - k[i, i] ** 2 for i in range(r)])
    k_col = np.array([np.sum(k[:, i] ** 2) - k[i, i] ** 2 for i in range(r)])
    l_row = np.array([np.sum(l[i, :] ** 2) - l[i, i] ** 2 for i in range(r)])
    l_col = np.array([np.sum(l[:, i] ** 2) - l[i, i] ** 2 for i in range(r)])
    cross = np.array([abs(k[i, :m] @ l[:, i] - k[i, i] * l[i, i]) for i in range(r)])

    slacks = {
        "abs_sum_upper": 2.0 - (np.abs(kd) + np.abs(ld)),
        "abs_sum_vs_squares": (np.abs(kd) + np.abs(ld)) - (kd**2 + ld**2),
        "squares_vs_rho": kd**2 + ld**2 - 2.0 * rho,
        "product_upper": gate(1.0 - kd * ld),
        "sign_match": gate(kd * ld),
        "k_diag_sq": gate(kd**2 - floor),
        "l_diag_sq": gate(ld**2 - floor),
        "product_floor": gate(kd * ld - floor),
        "k_row_tail": gate(tail_cap - k_row),
        "k_col_tail": gate(tail_cap - k_col),
        "l_row_tail": gate(tail_cap - l_row),
        "l_col_tail": gate(tail_cap - l_col),
        "cross_sum": gate(tail_cap - cross),
    }
    return DominanceReport(slacks, gated, rho)


def block_structure_residual(pair: PerturbedPair):
    """Deviation of ``K`` and ``L`` from block-diagonal form with a signed
    identity in the leading ``r x r`` block."""
    r = pair.r
    k, l = pair.k_align, pair.l_align
    return {
        "k_offdiag": float(max(np.max(np.abs(k[:r, r:])), np.max(np.abs(k[r:, :r])))),
        "l_offdiag": float(max(np.max(np.abs(l[:r, r:])), np.max(np.abs(l[r:, :r])))),
        "k_diag_dev": float(np.max(1.0 - np.abs(np.diag(k)[:r]))),
        "l_diag_dev": float(np.max(1.0 - np.abs(np.diag(l)[:r]))),
    }


def gap_bounds_from_spectra(gammas, sigmas, epsilon, rhos, r):
    """Right-hand sides of the r-MMSE and r-SVD gap bounds.

    Returns ``(rhs_el, rhs_ter, split)`` where ``split`` separates the
    contributions of leading (``j <= r``) and trailing (``j > r``) base
    singular values.
    """
    g = np.asarray(gammas, dtype=float)
    s = np.asarray(sigmas, dtype=float)[:r]
    w = 1.0 - np.asarray(rhos, dtype=float)[:r]
    x = s / (s**2 + epsilon)
    el_terms = 2.0 * w[:, None] * (x[:, None] * g[None, :] + 1.0) ** 2
    ter_terms = 2.0 * w[:, None] * (g[None, :] / s[:, None] + 1.0) ** 2
    split = {
        "el_leading": float(el_terms[:, :r].sum()),
        "el_trailing": float(el_terms[:, r:].sum()),
        "ter_leading": float(ter_terms[:, :r].sum()),
        "ter_trailing": float(ter_terms[:, r:].sum()),
    }
    return float(el_terms.sum()), float(ter_terms.sum()), split


def mmse_excess_terms(pair: PerturbedPair):
    """Pieces of the left-hand side of the MMSE-vs-r-MMSE criterion.

    ``leading``: sum over i > r, j <= r of (x_i g_j k_ij - l_ji)^2;
    ``trailing``: same over j > r; ``noise``: eps * sum_{i>r} x_i^2.
    """
    r, m = pair.r, pair.m
    g, s, eps = pair.gammas, pair.sigmas, pair.epsilon
    k = pair.k_align[:m, :m]
    l = pair.l_align
    x = s / (s**2 + eps)
    # terms[i, j] = (x_i gamma_j k_ij - l_ji)^2
    terms = (x[:, None] * g[None, :] * k - l.T) ** 2
    return {
        "leading": float(terms[r:, :r].sum()),
        "trailing": float(terms[r:, r:].sum()),
        "noise": float(eps * np.sum(x[r:] ** 2)),
    }


@dataclass(frozen=True)
class CertificateReport:
    rhs_el: float
    rhs_ter: float
    lhs_al: float
    threshold_al: float
    separation: SeparationData
    rho_gate: bool
    verdict_el_ter: str
    verdict_al: str
    definition_satisfied: bool
    rhs_split: dict
    lhs_split: dict

    def to_json(self):
        return {
            "rhs_el": self.rhs_el,
            "rhs_ter": self.rhs_ter,
            "lhs_al": self.lhs_al,
            "threshold_al": self.threshold_al,
            "rho": [float(v) for v in self.separation.rhos],
            "delta": [float(v) for v in self.separation.deltas],
            "delta_h_norm": self.separation.delta_h_norm,
            "rho_gate": self.rho_gate,
            "verdict_el_ter": self.verdict_el_ter,
            "verdict_al": self.verdict_al,
            "definition_satisfied": self.definition_satisfied,
        }


def robustness_certificates(pair: PerturbedPair) -> CertificateReport:
    """Evaluate the gap bounds and the MMSE-vs-r-MMSE criterion for ``pair``.

    The bounds are computed regardless of the ``rho_i > 1/2`` gate; when the
    gate fails both verdicts read ``'rho-gate-failed'``.  Otherwise
    ``verdict_al`` is ``'mmse-worse'`` iff ``lhs_al >= m - r`` and
    ``'inconclusive'`` if not.
    """
    sep = separation_data(pair, require_definition=False)
    r, m = pair.r, pair.m
    rhs_el, rhs_ter, split = gap_bounds_from_spectra(pair.gammas, pair.sigmas, pair.epsilon, sep.rhos, r)
    lhs = mmse_excess_terms(pair)
    lhs_al = lhs["leading"] + lhs["trailing"] + lhs["noise"]
    threshold = float(m - r)
    gate = bool(np.all(sep.deltas > 0) and np.all(sep.rhos > 0.5))
    if gate:
        verdict_el_ter = "bounds-valid"
        verdict_al = "mmse-worse" if lhs_al >= threshold else "inconclusive"
    else:
        verdict_el_ter = verdict_al = "rho-gate-failed"
    return CertificateReport(
        rhs_el=rhs_el,
        rhs_ter=rhs_ter,
        lhs_al=lhs_al,
        threshold_al=threshold,
        separation=sep,
        rho_gate=gate,
        verdict_el_ter=verdict_el_ter,
        verdict_al=verdict_al,
        definition_satisfied=bool(classify(pair).satisfied),
        rhs_split=split,
        lhs_split=lhs,
    )
