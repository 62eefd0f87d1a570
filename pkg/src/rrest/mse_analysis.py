"""Mean-square-error analysis of the MMSE, rank-``r`` MMSE and truncated SVD
estimators.

Two families of closed forms live here: the *shared* form, valid when the
true and perturbed array responses have the same singular vectors and only
the singular values move, and the *generic* form, which folds the rotation
of the singular bases into the alignment matrices ``K`` and ``L``.  The
per-index terms ``A_i`` and ``B_i`` decide the orderings::

    J(MMSE)   - J(r-MMSE) = sum_{i>r}  B_i
    J(r-MMSE) - J(r-SVD)  = sum_{i<=r} A_i
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize

from .estimators import EstimatorMatrix
from .exceptions import BadRank, DimensionMismatch, OptimizerFailure
from .model import LinearModel, PerturbedPair

SHARED_KINDS = ("mmse", "rmmse", "rsvd")


@dataclass(frozen=True)
class MseBreakdown:
    total: float
    per_index_a: np.ndarray
    per_index_b: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    x_weights: np.ndarray


@dataclass(frozen=True)
class PositivityRegions:
    """Where ``A`` and ``B`` are positive as functions of ``gamma``.

    ``a_interval`` is ``None`` when ``eps`` is too large relative to
    ``sigma^2`` for ``A`` to be positive anywhere.  ``B`` is positive on
    ``(0, b_lower_interval[1])`` and on ``(b_upper_interval[0], inf)``.
    """

    a_interval: Optional[tuple]
    b_lower_interval: tuple
    b_upper_interval: tuple
    beta_a: Optional[float]
    beta_b: float


def mse_exact(est, truth: LinearModel) -> float:
    """``tr[W (H H^T + eps I) W^T] - 2 tr[W H] + m`` for the true model."""
    w = est.w if isinstance(est, EstimatorMatrix) else np.asarray(est, dtype=float)
    h, eps = truth.h, truth.epsilon
    n, m = h.shape
    if w.shape != (m, n):
        raise DimensionMismatch(f"estimator shape {w.shape} does not match model {n}x{m}")
    r_y = h @ h.T + eps * np.eye(n)
    return float(np.trace(w @ r_y @ w.T) - 2.0 * np.trace(w @ h) + m)


def _x_weights(sigmas, epsilon):
    return sigmas / (sigmas**2 + epsilon)


def term_a(gamma, sigma, epsilon):
    """Per-index contribution to ``J(r-MMSE) - J(r-SVD)``."""
    gamma = np.asarray(gamma, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    x = _x_weights(sigma, epsilon)
    out = (x**2 * (gamma**2 + epsilon) - 2 * x * gamma) - (epsilon / sigma**2 + (gamma / sigma - 1) ** 2) + 1
    return out if out.ndim else float(out)


def term_b(gamma, sigma, epsilon):
    """Per-index contribution to ``J(MMSE) - m``."""
    gamma = np.asarray(gamma, dtype=float)
    x = _x_weights(np.asarray(sigma, dtype=float), epsilon)
    out = x**2 * (gamma**2 + epsilon) - 2 * x * gamma
    return out if out.ndim else float(out)


def _check_spectra(gammas, sigmas):
    g = np.asarray(gammas, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if g.ndim != 1 or g.shape != s.shape:
        raise DimensionMismatch(f"gammas {g.shape} and sigmas {s.shape} must be equal-length vectors")
    if np.any(g <= 0) or np.any(s <= 0):
        raise ValueError("singular values must be positive")
    return g, s


def _check_r(r, m):
    if r is None or not 1 <= int(r) < m:
        raise BadRank(f"rank constraint must satisfy 1 <= r < m={m}, got {r!r}")
    return int(r)


def closed_form_shared(kind, gammas, sigmas, epsilon, r=None) -> MseBreakdown:
    """MSE when only the singular values are perturbed (``M = U``, ``N = V``).

    ``r`` is required for 'rmmse' and 'rsvd' and ignored for 'mmse'
    (``per_index_a`` is then empty unless ``r`` is given).
    """
    g, s = _check_spectra(gammas, sigmas)
    m = g.size
    if kind not in SHARED_KINDS:
        raise ValueError(f"no closed form for estimator kind {kind!r}")
    if kind != "mmse" or r is not None:
        r = _check_r(r, m)
    x = _x_weights(s, epsilon)
    b = term_b(g, s, epsilon)
    a = term_a(g[:r], s[:r], epsilon) if r is not None else np.empty(0)
    if kind == "mmse":
        total = np.sum(b) + m
    elif kind == "rmmse":
        total = np.sum(b[:r]) + m
    else:
        total = m - r + epsilon * np.sum(1.0 / s[:r] ** 2) + np.sum((g[:r] / s[:r] - 1.0) ** 2)
    return MseBreakdown(float(total), a, b, g.copy(), g.copy(), x)


def decomposition_identities(gammas, sigmas, epsilon, r):
    """Residuals of the five MSE identities in terms of ``A_i``/``B_i``.

    Returns a dict keyed by identity name plus ``'max'``.
    """
    g, s = _check_spectra(gammas, sigmas)
    r = _check_r(r, g.size)
    m = g.size
    j_m = closed_form_shared("mmse", g, s, epsilon).total
    j_r = closed_form_shared("rmmse", g, s, epsilon, r).total
    j_t = closed_form_shared("rsvd", g, s, epsilon, r).total
    a = term_a(g[:r], s[:r], epsilon)
    b = term_b(g, s, epsilon)
    res = {
        "mmse": abs(j_m - (b.sum() + m)),
        "rmmse": abs(j_r - (b[:r].sum() + m)),
        "rmmse_minus_rsvd": abs((j_r - j_t) - a.sum()),
        "mmse_minus_rmmse": abs((j_m - j_r) - b[r:].sum()),
        "mmse_minus_rsvd": abs((j_m - j_t) - (a.sum() + b[r:].sum())),
    }
    res["max"] = max(res.values())
    return res


def critical_points(sigma, epsilon):
    """``(argmax_gamma A, argmin_gamma B)`` for fixed ``sigma`` and ``eps``."""
    gamma_a_max = sigma * (sigma**2 + epsilon) / (2 * sigma**2 + epsilon)
    gamma_b_min = sigma + epsilon / sigma
    return gamma_a_max, gamma_b_min


def _a_threshold():
    # ratio eps/sigma^2 at which sigma^6 - 2 eps sigma^4 - 3 eps^2 sigma^2 - eps^3 vanishes
    return scipy.optimize.brentq(lambda t: 1 - 2 * t - 3 * t**2 - t**3, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


A_POSITIVITY_RATIO = _a_threshold()  # ~0.3247, quoted as 0.325 in the literature
A_POSITIVITY_KAPPA = 1.0 / np.sqrt(A_POSITIVITY_RATIO)  # ~1.7549, quoted as 1.75


def positivity_regions(sigma, epsilon) -> PositivityRegions:
    gamma_a_max, inv_x = critical_points(sigma, epsilon)
    beta_b = np.sqrt(sigma**2 + epsilon**2 / sigma**2 + epsilon)
    if epsilon < A_POSITIVITY_RATIO * sigma**2:
        radicand = sigma**6 - 2 * epsilon * sigma**4 - 3 * epsilon**2 * sigma**2 - epsilon**3
        beta_a = float(np.sqrt(max(radicand, 0.0)) / (epsilon + 2 * sigma**2))
        a_interval = (gamma_a_max - beta_a, gamma_a_max + beta_a)
    else:
        beta_a = None
        a_interval = None
    return PositivityRegions(
        a_interval=a_interval,
        b_lower_interval=(0.0, inv_x - beta_b),
        b_upper_interval=(inv_x + beta_b, np.inf),
        beta_a=beta_a,
        beta_b=float(beta_b),
    )


def parametrized_terms(a_gamma, a_sigma):
    """``A`` and ``B`` with ``gamma = a_gamma sqrt(eps)``, ``sigma = a_sigma sqrt(eps)``.

    Both are free of ``eps``::

        A = [2 ag as (1 + as^2) - (1 + 2 as^2)(1 + ag^2)] / (as + as^3)^2
        B = as [as + ag (as ag - 2 as^2 - 2)] / (1 + as^2)^2
    """
    ag = np.asarray(a_gamma, dtype=float)
    asg = np.asarray(a_sigma, dtype=float)
    a_val = (2 * ag * asg * (1 + asg**2) - (1 + 2 * asg**2) * (1 + ag**2)) / (asg + asg**3) ** 2
    b_val = asg * (asg + ag * (asg * ag - 2 * asg**2 - 2)) / (1 + asg**2) ** 2
    if a_val.ndim == 0:
        return float(a_val), float(b_val)
    return a_val, b_val


def _neg_a_and_grad(p):
    ag, asg = p
    q = 1 + asg**2
    num = 2 * ag * asg * q - (1 + 2 * asg**2) * (1 + ag**2)
    den = (asg * q) ** 2
    dnum_dag = 2 * asg * q - 2 * ag * (1 + 2 * asg**2)
    dnum_das = 2 * ag * (1 + 3 * asg**2) - 4 * asg * (1 + ag**2)
    dden_das = 2 * asg * q * (q + 2 * asg**2)
    f = num / den
    grad = np.array([dnum_dag / den, (dnum_das * den - num * dden_das) / den**2])
    return -f, -grad


@dataclass(frozen=True)
class ExtremalConstants:
    a_argmax: tuple
    a_max: float
    b_sup: float
    b_near_zero: float
    grad_norm: float


def extremal_constants(grid=10, lo=0.1, hi=10.0, upper=50.0, gtol=1e-8) -> ExtremalConstants:
    """Maximise the parametrised ``A`` over ``(0, upper]^2`` by multi-start
    L-BFGS-B and evaluate the supremum of ``B`` along ``a_gamma -> 0`` at
    ``a_sigma = 1``.

    Raises :class:`OptimizerFailure` if the best point's gradient norm
    exceeds ``gtol``.
    """
    starts = np.linspace(lo, hi, grid)
    best = None
    for ag0 in starts:
        for as0 in starts:
            res = scipy.optimize.minimize(
                _neg_a_and_grad,
                x0=[ag0, as0],
                jac=True,
                method="L-BFGS-B",
                bounds=[(1e-8, upper), (1e-8, upper)],
                options={"gtol": 1e-14, "ftol": 1e-16, "maxiter": 2000},
            )
            if best is None or res.fun < best.fun:
                best = res
    _, grad = _neg_a_and_grad(best.x)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > gtol:
        raise OptimizerFailure(f"maximiser did not converge (gradient norm {gnorm:.3e})")
    # closed-form limit a^2 / (1 + a^2)^2 at a = 1
    b_sup = 1.0 / (1.0 + 1.0) ** 2
    b_near_zero = parametrized_terms(1e-12, 1.0)[1]
    return ExtremalConstants(
        a_argmax=(float(best.x[0]), float(best.x[1])),
        a_max=float(-best.fun),
        b_sup=b_sup,
        b_near_zero=float(b_near_zero),
        grad_norm=gnorm,
    )


def _phi_psi(pair: PerturbedPair):
    m = pair.m
    g = pair.gammas
    k = pair.k_align[:m, :m]
    l = pair.l_align
    phi = np.sqrt(np.sum(k**2 * g**2, axis=1))
    # psi_i = sum_j gamma_j k_ij l_ji
    psi = np.sum(g * k * l.T, axis=1)
    return phi, psi


def closed_form_generic(pair: PerturbedPair, kind, r=None) -> MseBreakdown:
    """MSE for an arbitrary perturbation, expressed through ``K`` and ``L``.

    ``r`` defaults to ``pair.r``.  ``per_index_a``/``per_index_b`` hold the
    generic analogues of ``A_i`` (``i <= r``) and ``B_i`` (all ``i``).
    """
    if kind not in SHARED_KINDS:
        raise ValueError(f"no closed form for estimator kind {kind!r}")
    m = pair.m
    r = _check_r(pair.r if r is None else r, m)
    eps = pair.epsilon
    s = pair.sigmas
    phi, psi = _phi_psi(pair)
    x = _x_weights(s, eps)
    b = x**2 * (phi**2 + eps) - 2 * x * psi
    svd_terms = (phi[:r] ** 2 + eps) / s[:r] ** 2 - 2 * psi[:r] / s[:r]
    a = b[:r] - svd_terms
    if kind == "mmse":
        total = b.sum() + m
    elif kind == "rmmse":
        total = b[:r].sum() + m
    else:
        total = svd_terms.sum() + m
    return MseBreakdown(float(total), a, b, phi, psi, x)


@dataclass(frozen=True)
class CorollaryGaps:
    gap_rmmse: float
    gap_rsvd: float
    mmse_minus_rmmse: float
    max_discrepancy: float


def corollary_gaps(pair: PerturbedPair, r=None) -> CorollaryGaps:
    """Distance of the generic r-MMSE/r-SVD MSEs from their shared-form
    counterparts, and the generic ``J(MMSE) - J(r-MMSE)``.

    Every quantity is computed twice (subtracting closed forms, and through
    the ``phi``/``psi`` expansion); ``max_discrepancy`` is the largest
    disagreement.
    """
    m = pair.m
    r = _check_r(pair.r if r is None else r, m)
    g, s, eps = pair.gammas, pair.sigmas, pair.epsilon
    phi, psi = _phi_psi(pair)
    x = _x_weights(s, eps)

    exp_rmmse = abs(np.sum(x[:r] ** 2 * (phi[:r] ** 2 - g[:r] ** 2) + 2 * x[:r] * (g[:r] - psi[:r])))
    exp_rsvd = abs(np.sum((phi[:r] ** 2 - g[:r] ** 2) / s[:r] ** 2 + 2 * (g[:r] - psi[:r]) / s[:r]))
    exp_al = np.sum(x[r:] ** 2 * (phi[r:] ** 2 + eps)) - 2 * np.sum(x[r:] * psi[r:])

    gen = {k: closed_form_generic(pair, k, r).total for k in SHARED_KINDS}
    sub_rmmse = abs(gen["rmmse"] - closed_form_shared("rmmse", g, s, eps, r).total)
    sub_rsvd = abs(gen["rsvd"] - closed_form_shared("rsvd", g, s, eps, r).total)
    sub_al = gen["mmse"] - gen["rmmse"]

    disc = max(abs(exp_rmmse - sub_rmmse), abs(exp_rsvd - sub_rsvd), abs(exp_al - sub_al))
    return CorollaryGaps(float(exp_rmmse), float(exp_rsvd), float(exp_al), float(disc))


def sweep_grid(a_gamma_axis, a_sigma_axis):
    """Evaluate the parametrised terms over a grid.

    Rows are ordered with ``a_gamma`` as the outer index.  Returns an
    ``(N, 4)`` array with columns ``a_gamma, a_sigma, a_value, b_value``.
    """
    ag, asg = np.meshgrid(np.asarray(a_gamma_axis, float), np.asarray(a_sigma_axis, float), indexing="ij")
    a_val, b_val = parametrized_terms(ag, asg)
    return np.column_stack([ag.ravel(), asg.ravel(), np.ravel(a_val), np.ravel(b_val)])
