import json
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats
from hypothesis import given, strategies as st

from rrest import estimators as est
from rrest.exceptions import RejectionExhausted
from rrest.model import classify
from rrest.mse_analysis import mse_exact
from rrest.random_ensembles import (
    MC_CHUNK,
    ScenarioConfig,
    condition_tail_bounds,
    condition_tail_frequency,
    gaussian_matrix,
    generate_scenario,
    make_rng,
    monte_carlo_mse,
    singular_pdf_unnormalized,
    smallest_sv_cdf,
    smallest_sv_frequency,
    spectral_norm_tail,
)
from rrest.validation import random_pair


def test_rng_is_reproducible():
    a = make_rng(42).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(42).standard_normal(5))
    assert not np.array_equal(a, make_rng(43).standard_normal(5))
    g = make_rng(1)
    assert make_rng(g) is g


def test_gaussian_matrix_scale():
    x = gaussian_matrix(200, 200, 0.5, make_rng(0))
    assert x.std() == pytest.approx(0.5, rel=0.02)
    with pytest.raises(ValueError):
        gaussian_matrix(2, 2, 0.0)


def test_smallest_sv_cdf_values():
    assert smallest_sv_cdf(1.0) == pytest.approx(1 - math.exp(-1.5))
    assert smallest_sv_cdf(1.0) == pytest.approx(0.777, abs=1e-3)
    assert smallest_sv_cdf(0.0) == 0.0
    t = np.linspace(0, 10, 50)
    assert np.all(np.diff(smallest_sv_cdf(t)) > 0)


def test_condition_tail_bounds():
    assert condition_tail_bounds(250.0) == pytest.approx((0.13 / 250, 5.60 / 250))
    assert condition_tail_bounds(1.0) == (0.13, 1.0)
    with pytest.raises(ValueError):
        condition_tail_bounds(0.0)


def test_spectral_norm_tail():
    thr, conf = spectral_norm_tail(0.01, 4, 2.0)
    assert thr == pytest.approx(0.01 * (4 + 2))
    assert conf == pytest.approx(1 - 2 * math.exp(-2))
    assert spectral_norm_tail(1.0, 4, 0.1)[1] == 0.0


def test_spectral_norm_tail_coverage():
    rng = make_rng(3)
    thr, conf = spectral_norm_tail(0.01, 4, 1.5)
    norms = np.linalg.norm(0.01 * rng.standard_normal((20000, 4, 4)), 2, axis=(1, 2))
    assert np.mean(norms <= thr) >= conf


def test_singular_pdf_properties():
    assert singular_pdf_unnormalized([1.0, 1.0]) == 0.0
    assert singular_pdf_unnormalized([2.0, 1.0]) == pytest.approx(3 * math.exp(-2.5))
    assert singular_pdf_unnormalized([1.0, 2.0]) == singular_pdf_unnormalized([2.0, 1.0])


def test_singular_pdf_matches_histogram_for_m2():
    f = lambda g2, g1: singular_pdf_unnormalized([g1, g2])
    norm, err = scipy.integrate.dblquad(f, 0, 12, 0, lambda g1: g1, epsabs=1e-10, epsrel=1e-10)
    assert err < 1e-6
    rng = make_rng(99)
    n = 40000
    sv = np.linalg.svd(rng.standard_normal((n, 2, 2)), compute_uv=False)
    edges1 = [0, 1, 1.5, 2, 2.5, 3.2, np.inf]
    edges2 = [0, 0.3, 0.6, 1.0, np.inf]
    observed, expected = [], []
    for a1, b1 in zip(edges1[:-1], edges1[1:]):
        for a2, b2 in zip(edges2[:-1], edges2[1:]):
            hi1 = min(b1, 12.0)
            p, _ = scipy.integrate.dblquad(
                f, a1, hi1, lambda g1: min(a2, g1), lambda g1: min(b2, g1), epsabs=1e-11
            )
            inside = (sv[:, 0] >= a1) & (sv[:, 0] < b1) & (sv[:, 1] >= a2) & (sv[:, 1] < b2)
            if p / norm * n >= 5:
                expected.append(p / norm * n)
                observed.append(inside.sum())
    observed, expected = np.array(observed), np.array(expected)
    expected *= observed.sum() / expected.sum()
    _, pvalue = scipy.stats.chisquare(observed, expected)
    assert pvalue > 1e-3


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(n=3, m=4)
    with pytest.raises(ValueError):
        ScenarioConfig(delta_sd=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(max_rejects=0)


def test_rejection_budget():
    with pytest.raises(RejectionExhausted):
        generate_scenario(ScenarioConfig(max_rejects=3, seed=0))


@given(st.integers(0, 2**32 - 1))
def test_scenarios_meet_acceptance_rule(seed):
    cfg = ScenarioConfig(seed=seed)
    sc = generate_scenario(cfg)
    g = sc.pair.gammas
    assert g[-1] < cfg.gamma_min_cap and g[0] / g[-1] >= cfg.cond_min
    assert sc.pair.epsilon == pytest.approx(max(g[-1], sc.pair.sigmas[-1]) ** 2)
    assert sc.pair.r == cfg.m - 1


def test_scenario_is_deterministic_and_serialises():
    one, two = generate_scenario(ScenarioConfig(seed=5)), generate_scenario(ScenarioConfig(seed=5))
    assert one.rejects == two.rejects
    np.testing.assert_array_equal(one.pair.h_pert, two.pair.h_pert)
    obj = json.loads(json.dumps(one.to_json()))
    assert obj["seed"] == 5 and obj["rejects"] == one.rejects and "epsilon" in obj


def test_scenarios_usually_satisfy_definition():
    ok = sum(bool(classify(generate_scenario(ScenarioConfig(seed=s)).pair)) for s in range(20))
    assert ok >= 15


def test_monte_carlo_merge_matches_direct_computation():
    pair = random_pair(make_rng(0), m_range=(3, 4))
    w = est.r_mmse(pair.h_pert, pair.epsilon, pair.r)
    n = 2 * MC_CHUNK + 17
    res = monte_carlo_mse(w, pair.base, n, rng=123)
    errs = []
    for size, seq in zip([MC_CHUNK, MC_CHUNK, 17], np.random.SeedSequence(123).spawn(3)):
        g = np.random.Generator(np.random.PCG64(seq))
        x = g.standard_normal((size, pair.m))
        noise = g.standard_normal((size, pair.n))
        y = x @ pair.base.h.T + math.sqrt(pair.epsilon) * noise
        errs.append(np.sum((y @ w.w.T - x) ** 2, axis=1))
    errs = np.concatenate(errs)
    assert res.estimate == pytest.approx(errs.mean(), rel=1e-12)
    assert res.stderr == pytest.approx(errs.std(ddof=1) / math.sqrt(n), rel=1e-9)
    assert res.n_samples == n


def test_monte_carlo_independent_of_workers():
    pair = random_pair(make_rng(1), m_range=(3, 5))
    w = est.mmse(pair.h_pert, pair.epsilon)
    a = monte_carlo_mse(w, pair.base, 300_000, rng=7, workers=1)
    b = monte_carlo_mse(w, pair.base, 300_000, rng=7, workers=4)
    assert a == b


def test_monte_carlo_agrees_with_exact():
    pair = random_pair(make_rng(2), m_range=(3, 6))
    w = est.r_svd(pair.h_pert, pair.r)
    res = monte_carlo_mse(w, pair.base, 400_000, rng=3)
    assert abs(res.estimate - mse_exact(w, pair.base)) <= 4 * res.stderr
    with pytest.raises(ValueError):
        monte_carlo_mse(w, pair.base, 1)


def test_empirical_frequencies_are_probabilities():
    f = condition_tail_frequency(3, 5.0, 3000, make_rng(0), batch=700)
    assert 0 < f < 1
    assert f == condition_tail_frequency(3, 5.0, 3000, make_rng(0), batch=3000)
    s = smallest_sv_frequency(10, 1.0, 300, make_rng(0))
    assert 0.6 < s < 0.95
