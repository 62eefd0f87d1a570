"""Seeded fuzz corpora and the property suites behind ``rrest validate``.

Every instance generator takes a :class:`numpy.random.Generator` and is a
pure function of its state.  Suites return a :class:`SuiteResult` with one
pass/total count per property and reproducers for failures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ortho_group

from . import estimators as est
from .exceptions import DegenerateSpectrum, RankDeficient
from .model import PerturbedPair, classify, decompose
from .mse_analysis import (
    SHARED_KINDS,
    closed_form_generic,
    closed_form_shared,
    corollary_gaps,
    decomposition_identities,
    mse_exact,
)
from .perturbation_bounds import (
    angle_bounds,
    block_structure_residual,
    diagonal_dominance_report,
    robustness_certificates,
    separation_data,
    spectral_norm,
    stewart_envelope,
    sv_interval,
)
from .random_ensembles import (
    condition_tail_bounds,
    condition_tail_frequency,
    make_rng,
    smallest_sv_cdf,
    smallest_sv_frequency,
    spectral_norm_tail,
)

SLACK_TOL = 1e-12
REL_TOL = 1e-10


def _haar(k, rng):
    if k == 1:
        return np.array([[1.0 if rng.random() < 0.5 else -1.0]])
    return ortho_group.rvs(k, random_state=rng)


def _retry(builder, rng, attempts=100):
    for _ in range(attempts):
        try:
            out = builder(rng)
        except (DegenerateSpectrum, RankDeficient):
            continue
        if out is not None:
            return out
    raise RuntimeError("could not build a valid instance")


def random_pair(rng, m_range=(3, 16), n_extra=4) -> PerturbedPair:
    """Generic pair: Gaussian H, Gaussian perturbation of random scale,
    log-uniform noise power, random rank."""

    def build(rng):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        n = int(min(m_range[1], m + rng.integers(0, n_extra + 1)))
        h = rng.standard_normal((n, m))
        delta = 10 ** rng.uniform(-3, -0.5) * rng.standard_normal((n, m))
        eps = 10 ** rng.uniform(-4, 0)
        r = int(rng.integers(1, m))
        return PerturbedPair.build(h, delta, eps, r)

    return _retry(build, rng)


def shared_vector_pair(rng, m_range=(3, 16), n_extra=4) -> PerturbedPair:
    """Pair whose true and perturbed array responses share singular vectors."""

    def build(rng):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        n = int(min(m_range[1], m + rng.integers(0, n_extra + 1)))
        u = _haar(n, rng)[:, :m]
        v = _haar(m, rng)
        gam = np.sort(10 ** rng.uniform(-2, 1, m))[::-1]
        sig = np.sort(gam * (1 + 0.05 * rng.standard_normal(m)))[::-1]
        if np.any(sig <= 0):
            return None
        h = (u * gam) @ v.T
        h_pert = (u * sig) @ v.T
        eps = 10 ** rng.uniform(-4, 0)
        return PerturbedPair.build(h, h_pert - h, eps, int(rng.integers(1, m)))

    return _retry(build, rng)


def ill_conditioned_pair(rng, m_range=(3, 8), n_extra=4) -> PerturbedPair:
    """Pair satisfying the ill-conditioned/high-SNR conditions by construction.

    Leading singular values sit above ``kappa sqrt(eps)`` with
    multiplicative spacing, trailing ones below ``0.6 sqrt(eps)``, and the
    perturbation norm is at most ``0.2`` of the smallest leading gap and
    ``0.28 sqrt(eps)``.  Draws failing :func:`classify` are discarded.
    """

    def build(rng):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        n = m + int(rng.integers(0, n_extra + 1))
        r = int(rng.integers(1, m))
        eps = 10 ** rng.uniform(-6, -1)
        root = np.sqrt(eps)
        kappa = 10 ** rng.uniform(np.log10(2), 2)
        lead = [kappa * root * rng.uniform(1.2, 3.0)]
        for _ in range(r - 1):
            lead.append(lead[-1] * rng.uniform(1.3, 4.0))
        lead = np.array(lead[::-1])
        trail = np.sort(root * rng.uniform(0.01, 0.6, m - r))[::-1]
        gam = np.concatenate([lead, trail])
        min_gap = np.min(-np.diff(gam[: r + 1]))
        d = min(0.2 * min_gap, 0.28 * root) * 10 ** rng.uniform(-1.5, 0)
        e = rng.standard_normal((n, m))
        delta = d * e / spectral_norm(e)
        h = (_haar(n, rng)[:, :m] * gam) @ _haar(m, rng).T
        pair = PerturbedPair.build(h, delta, eps, r, kappa)
        return pair if classify(pair).satisfied else None

    return _retry(build, rng)


def random_perturbation(rng, m_range=(2, 6), n_extra=3):
    """Generic ``(A, E)`` with distinct singular values on both sides."""

    def build(rng):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        n = m + int(rng.integers(0, n_extra + 1))
        a = rng.standard_normal((n, m))
        e = 10 ** rng.uniform(-3, 0) * rng.standard_normal((n, m))
        decompose(a)
        decompose(a + e)
        return a, e

    return _retry(build, rng)


@dataclass
class PropertyCount:
    passed: int = 0
    total: int = 0
    worst: float = 0.0

    @property
    def ok(self):
        return self.passed == self.total


@dataclass
class SuiteResult:
    name: str
    properties: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def record(self, prop, ok, worst=0.0, reproducer=None):
        pc = self.properties.setdefault(prop, PropertyCount())
        pc.total += 1
        pc.passed += bool(ok)
        pc.worst = max(pc.worst, float(worst))
        if not ok and reproducer is not None and len(self.failures) < 20:
            self.failures.append({"property": prop, **reproducer})

    @property
    def ok(self):
        return all(p.ok for p in self.properties.values())

    def lines(self):
        for name, pc in self.properties.items():
            yield f"{name}: {pc.passed}/{pc.total} passed (worst {pc.worst:.3e})"


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def run_mse_suite(trials, seed) -> SuiteResult:
    res = SuiteResult("mse")
    for t in range(trials):
        rng = make_rng([seed, t])
        pair = random_pair(rng)
        repro = {"seed": seed, "trial": t, "pair": pair.to_json()}
        for kind in SHARED_KINDS:
            w = est.build(kind, pair.h_pert, pair.epsilon, pair.r)
            err = _rel(closed_form_generic(pair, kind).total, mse_exact(w, pair.base))
            res.record(f"closed_form_vs_exact[{kind}]", err < REL_TOL, err, repro)
        gaps = corollary_gaps(pair)
        res.record("corollary_dual_computation", gaps.max_discrepancy < REL_TOL, gaps.max_discrepancy, repro)
        cert = robustness_certificates(pair)
        diff = closed_form_generic(pair, "mmse").total - closed_form_generic(pair, "rmmse").total
        err = abs(diff - (cert.lhs_al - cert.threshold_al))
        res.record("mmse_excess_identity", err < REL_TOL, err, repro)

        shared = shared_vector_pair(rng)
        repro = {"seed": seed, "trial": t, "pair": shared.to_json()}
        for kind in SHARED_KINDS:
            a = closed_form_shared(kind, shared.gammas, shared.sigmas, shared.epsilon, shared.r).total
            b = closed_form_generic(shared, kind).total
            err = _rel(b, a)
            res.record(f"shared_specialization[{kind}]", err < REL_TOL, err, repro)
        ident = decomposition_identities(pair.gammas, pair.sigmas, pair.epsilon, pair.r)
        res.record("decomposition_identities", ident["max"] < REL_TOL, ident["max"], {"seed": seed, "trial": t})
    return res


def run_bounds_suite(trials, seed) -> SuiteResult:
    res = SuiteResult("bounds")
    for t in range(trials):
        rng = make_rng([seed, t, 1])
        m = int(rng.integers(2, 9))
        h = rng.standard_normal((m + int(rng.integers(0, 4)), m))
        delta = 10 ** rng.uniform(-3, 0) * rng.standard_normal(h.shape)
        g = np.linalg.svd(h, compute_uv=False)
        s = np.linalg.svd(h + delta, compute_uv=False)
        dn = spectral_norm(delta)
        worst = 0.0
        ok = True
        for gi, si in zip(g, s):
            iv = sv_interval(gi, dn)
            if iv is None:
                continue
            tol = 1e-12 * max(1.0, iv[1])
            viol = max(iv[0] - si, si - iv[1], 0.0)
            worst = max(worst, viol)
            ok &= viol <= tol
        res.record("sv_interval_containment", ok, worst, {"seed": seed, "trial": t})

        a, e = random_perturbation(rng)
        env = stewart_envelope(a, e)
        worst = max(0.0, -min(x.slack for x in env))
        res.record("stewart_envelope", all(x.holds for x in env), worst, {"seed": seed, "trial": t})
        ok = True
        worst = 0.0
        for i in range(a.shape[1]):
            ab = angle_bounds(a, e, i, i)
            v = max(ab.wedin_lhs - ab.wedin_rhs, ab.dopico_lhs - (ab.dopico_rhs if ab.dopico_rhs is not None else np.inf))
            worst = max(worst, v)
            ok &= v <= SLACK_TOL
        res.record("wedin_dopico", ok, worst, {"seed": seed, "trial": t})

        pair = ill_conditioned_pair(rng)
        repro = {"seed": seed, "trial": t, "pair": pair.to_json()}
        dom = diagonal_dominance_report(pair)
        res.record("diagonal_dominance", dom.min_slack >= -SLACK_TOL, max(0.0, -dom.min_slack), repro)
        sep = separation_data(pair)
        cap = np.sqrt(2 * (1 - sep.rhos.min()))
        blk = block_structure_residual(pair)
        excess = max(blk["k_offdiag"], blk["l_offdiag"]) - cap
        res.record("block_structure", excess <= SLACK_TOL, max(excess, 0.0), repro)
        cert = robustness_certificates(pair)
        if cert.rho_gate:
            gaps = corollary_gaps(pair)
            v = max(gaps.gap_rmmse - cert.rhs_el, gaps.gap_rsvd - cert.rhs_ter)
            res.record("gap_bounds", v <= REL_TOL, max(v, 0.0), repro)
    return res


def run_ensembles_suite(trials, seed, t_cond=250.0, m_cond=4, m_small=200, n_small=2000) -> SuiteResult:
    res = SuiteResult("ensembles")
    freq = condition_tail_frequency(m_cond, t_cond, trials, make_rng([seed, 0]))
    lo, hi = condition_tail_bounds(t_cond)
    res.record("condition_tail_bracket", lo < freq < hi, freq, {"seed": seed, "empirical": freq, "lower": lo, "upper": hi})
    rng = make_rng([seed, 1])
    thr, conf = spectral_norm_tail(0.01, 4, 2.0)
    n_norm = min(trials, 10_000)
    hits = sum(spectral_norm(0.01 * rng.standard_normal((4, 4))) <= thr for _ in range(n_norm))
    res.record("spectral_norm_tail", hits / n_norm >= conf - 0.02, hits / n_norm, {"seed": seed})
    freq_s = smallest_sv_frequency(m_small, 1.0, n_small, make_rng([seed, 2]))
    target = smallest_sv_cdf(1.0)
    res.record("smallest_sv_law", abs(freq_s - target) <= 0.05, abs(freq_s - target), {"seed": seed, "empirical": freq_s})
    res.condition_rows = [(t_cond, freq, lo, hi)]
    res.smallest_rows = [(1.0, freq_s, target - 0.05, target + 0.05)]
    return res


SUITES = {"mse": run_mse_suite, "bounds": run_bounds_suite, "ensembles": run_ensembles_suite}
