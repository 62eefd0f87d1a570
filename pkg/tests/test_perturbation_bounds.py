import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrest.exceptions import DefinitionViolated, DimensionMismatch, ZeroGap
from rrest.model import PerturbedPair
from rrest.mse_analysis import closed_form_generic, corollary_gaps
from rrest.perturbation_bounds import (
    gap_bounds_from_spectra,
    angle_bounds,
    block_structure_residual,
    diagonal_dominance_report,
    mmse_excess_terms,
    robustness_certificates,
    separation_data,
    separation_from_spectra,
    spectral_norm,
    stewart_envelope,
    sv_interval,
)
from rrest.validation import ill_conditioned_pair, random_pair, random_perturbation

from conftest import (
    PUBLISHED_DELTA_NORM,
    PUBLISHED_EPS,
    PUBLISHED_GAMMAS,
    PUBLISHED_R,
    PUBLISHED_SIGMAS,
    shared_pair,
)

seeds = st.integers(0, 2**32 - 1)


def test_spectral_norm(rng):
    a = rng.standard_normal((4, 3))
    assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2))
    assert spectral_norm(np.zeros((2, 2))) == 0.0


def test_sv_interval_examples():
    lo, hi = sv_interval(1.0, 0.1)
    assert lo == pytest.approx(0.9) and hi == pytest.approx(1 + 0.1 * np.sqrt(2))
    assert sv_interval(0.1, 0.1) is None


@given(seeds, st.floats(-3, 0))
def test_perturbed_singular_values_stay_in_interval(seed, log_scale):
    g = np.random.default_rng(seed)
    m = int(g.integers(1, 7))
    h = g.standard_normal((m + int(g.integers(0, 3)), m))
    d = 10**log_scale * g.standard_normal(h.shape)
    dn = spectral_norm(d)
    for gam, sig in zip(np.linalg.svd(h, compute_uv=False), np.linalg.svd(h + d, compute_uv=False)):
        iv = sv_interval(gam, dn)
        if iv is not None:
            assert iv[0] - 1e-12 <= sig <= iv[1] + 1e-12


@given(seeds)
def test_stewart_envelope_holds(seed):
    a, e = random_perturbation(np.random.default_rng(seed))
    assert all(entry.holds for entry in stewart_envelope(a, e))


def test_stewart_envelope_square_case_has_no_complement(rng):
    a = rng.standard_normal((3, 3))
    e = 0.1 * rng.standard_normal((3, 3))
    # with n = m the projector is the identity: envelope is (s -+ ||E||)^2
    en = stewart_envelope(a, e)
    s, nrm = np.linalg.svd(a, compute_uv=False), spectral_norm(e)
    np.testing.assert_allclose([x.hi for x in en], (s + nrm) ** 2)
    with pytest.raises(DimensionMismatch):
        stewart_envelope(a, np.zeros((3, 2)))


@given(seeds)
def test_wedin_and_dopico_bounds_hold(seed):
    a, e = random_perturbation(np.random.default_rng(seed))
    for i in range(a.shape[1]):
        ab = angle_bounds(a, e, i, i)
        assert ab.wedin_lhs <= ab.wedin_rhs + 1e-12
        assert ab.dopico_rhs is not None and ab.dopico_lhs <= ab.dopico_rhs + 1e-12
        assert ab.zeta <= ab.delta


def test_wedin_tall_case_adds_zero_candidate():
    a = np.diag([3.0, 2.0, 0.4])
    e = 1e-4 * np.ones((3, 3))
    tall = np.vstack([a, np.zeros((1, 3))])
    square = angle_bounds(a, e, 2, 2)
    padded = angle_bounds(tall, np.vstack([e, np.zeros((1, 3))]), 2, 2)
    assert square.delta == pytest.approx(1.6, abs=1e-3)
    # for n > m the separation is also measured from zero
    assert padded.delta == pytest.approx(0.4, abs=1e-3)


def test_angle_bounds_errors():
    a = np.diag([2.0, 1.0])
    with pytest.raises(IndexError):
        angle_bounds(a, np.zeros((2, 2)), 2, 0)
    # sigma~_1 of a+e equals alpha_2 = 1 exactly
    with pytest.raises(ZeroGap):
        angle_bounds(a, np.diag([-1.0, -0.5]), 0, 0)


def test_published_example_rho_values():
    sep = separation_from_spectra(PUBLISHED_GAMMAS, PUBLISHED_SIGMAS, PUBLISHED_DELTA_NORM, PUBLISHED_R)
    np.testing.assert_allclose(sep.rhos, [0.9995, 0.9995, 0.9987], atol=5e-4)
    # sigma_1 against gamma_2; later indices against both neighbours
    np.testing.assert_allclose(sep.deltas, [3.894 - 2.426, 3.889 - 2.435, 0.934 - 0.003], atol=1e-12)


def test_published_example_theorem_bounds():
    sep = separation_from_spectra(PUBLISHED_GAMMAS, PUBLISHED_SIGMAS, PUBLISHED_DELTA_NORM, PUBLISHED_R)
    el, ter, split = gap_bounds_from_spectra(PUBLISHED_GAMMAS, PUBLISHED_SIGMAS, PUBLISHED_EPS, sep.rhos, PUBLISHED_R)
    assert el == pytest.approx(0.1404, abs=0.005)
    assert ter == pytest.approx(0.1405, abs=0.005)
    assert split["el_trailing"] == pytest.approx(0.0047, abs=5e-4)
    assert split["el_leading"] + split["el_trailing"] == pytest.approx(el)


def test_separation_requires_definition(small_pair):
    with pytest.raises(DefinitionViolated):
        separation_data(small_pair)
    assert separation_data(small_pair, require_definition=False).rhos.shape == (2,)


@given(seeds)
def test_diagonal_dominance_on_fuzz_corpus(seed):
    pair = ill_conditioned_pair(np.random.default_rng(seed))
    rep = diagonal_dominance_report(pair)
    assert rep.min_slack >= -1e-12
    assert np.all(rep.gated == (rep.rhos > 0.5))


@given(seeds)
def test_block_structure_shrinks_with_rho(seed):
    pair = ill_conditioned_pair(np.random.default_rng(seed))
    rho = separation_data(pair).rhos
    blk = block_structure_residual(pair)
    cap = np.sqrt(2 * (1 - rho.min()))
    assert blk["k_offdiag"] <= cap + 1e-12 and blk["l_offdiag"] <= cap + 1e-12
    assert blk["k_diag_dev"] <= 1 - rho.min() + 1e-12


@given(seeds)
def test_gap_bounds_hold_under_gate(seed):
    pair = ill_conditioned_pair(np.random.default_rng(seed))
    cert = robustness_certificates(pair)
    assert cert.rho_gate
    gaps = corollary_gaps(pair)
    assert gaps.gap_rmmse <= cert.rhs_el + 1e-10
    assert gaps.gap_rsvd <= cert.rhs_ter + 1e-10


@given(seeds)
def test_mmse_excess_identity_is_exact(seed):
    pair = random_pair(np.random.default_rng(seed))
    cert = robustness_certificates(pair)
    diff = closed_form_generic(pair, "mmse").total - closed_form_generic(pair, "rmmse").total
    assert cert.lhs_al - cert.threshold_al == pytest.approx(diff, abs=1e-10)
    if cert.verdict_al == "mmse-worse":
        assert diff >= -1e-10
    if cert.verdict_al == "inconclusive":
        assert diff < 0


def test_excess_terms_noise_part_is_at_most_quarter(small_pair):
    t = mmse_excess_terms(small_pair)
    assert 0 <= t["noise"] <= (small_pair.m - small_pair.r) / 4 + 1e-12


def test_zero_perturbation_certificate(rng):
    h = rng.standard_normal((5, 4))
    pair = PerturbedPair.build(h, np.zeros_like(h), 0.05, 2)
    cert = robustness_certificates(pair)
    assert cert.rho_gate and cert.rhs_el == 0.0 and cert.rhs_ter == 0.0
    g = pair.gammas[2:]
    assert cert.lhs_al - cert.threshold_al == pytest.approx(np.sum(-(g**2) / (g**2 + 0.05)), abs=1e-12)
    assert cert.verdict_al == "inconclusive"


def test_gate_failure_reported_not_asserted(rng):
    # nearly repeated leading singular values and a large perturbation
    pair = shared_pair([2.0, 1.9, 0.1], [2.05, 1.85, 0.1], 0.01, 2, seed=3)
    pair = PerturbedPair.build(pair.base.h, pair.delta + 0.2 * rng.standard_normal((3, 3)), 0.01, 2)
    cert = robustness_certificates(pair)
    assert not cert.rho_gate
    assert cert.verdict_al == cert.verdict_el_ter == "rho-gate-failed"
    assert np.isfinite(cert.rhs_el) and np.isfinite(cert.rhs_ter)


def test_certificate_json_keys(small_pair):
    obj = robustness_certificates(small_pair).to_json()
    for key in ("rhs_el", "rhs_ter", "lhs_al", "threshold_al", "rho", "delta", "rho_gate", "verdict_al"):
        assert key in obj
    assert len(obj["rho"]) == small_pair.r
