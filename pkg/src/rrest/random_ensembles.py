"""Gaussian random-matrix scenarios, their analytic tail laws, and a Monte
Carlo estimator of the MSE.

Randomness comes from :class:`numpy.random.Generator` on a PCG64 stream
seeded through :class:`numpy.random.SeedSequence`; parallel work draws
child streams from a fixed seed tree, so results depend only on the seed.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import EstimatorMatrix
from .exceptions import RejectionExhausted
from .model import LinearModel, PerturbedPair

MC_CHUNK = 1 << 16


def make_rng(seed=None):
    """A PCG64 generator; integers, sequences and generators are accepted."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _seed_sequence(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return np.random.SeedSequence(int(rng_or_seed.integers(0, 2**63)))
    if isinstance(rng_or_seed, np.random.SeedSequence):
        return rng_or_seed
    return np.random.SeedSequence(rng_or_seed)


def worker_count():
    try:
        return max(1, int(os.environ.get("RREST_THREADS", "1")))
    except ValueError:
        return 1


def gaussian_matrix(n, m, sd=1.0, rng=None):
    if not sd > 0:
        raise ValueError(f"sd must be positive, got {sd}")
    return sd * make_rng(rng).standard_normal((n, m))


def smallest_sv_cdf(t):
    """Asymptotic ``P(m * gamma_m^2 <= t)`` for an m x m standard Gaussian
    matrix, with the ``o(1)`` correction dropped."""
    t = np.asarray(t, dtype=float)
    out = 1.0 - np.exp(-t / 2.0 - np.sqrt(t))
    return out if out.ndim else float(out)


COND_TAIL_LOWER = 0.13
COND_TAIL_UPPER = 5.60


def condition_tail_bounds(t):
    """Bracket ``(0.13/t, 5.60/t)`` on ``P(cond(H) > m t)`` clamped to [0, 1]."""
    if not t > 0:
        raise ValueError("t must be positive")
    return min(max(COND_TAIL_LOWER / t, 0.0), 1.0), min(max(COND_TAIL_UPPER / t, 0.0), 1.0)


def singular_pdf_unnormalized(gammas):
    """Joint singular value density of a square Gaussian matrix, up to the
    normalising constant."""
    g = np.asarray(gammas, dtype=float)
    sq = g**2
    vdm = 1.0
    for i in range(g.size):
        for j in range(i + 1, g.size):
            vdm *= abs(sq[j] - sq[i])
    return float(np.exp(-0.5 * np.sum(sq)) * vdm)


def spectral_norm_tail(sd, m, t):
    """``(threshold, confidence)``: ``P(||dH||_2 <= sd (2 sqrt(m) + t))`` is at
    least ``confidence = max(1 - 2 exp(-t^2/2), 0)``."""
    return sd * (2.0 * math.sqrt(m) + t), max(1.0 - 2.0 * math.exp(-(t**2) / 2.0), 0.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Rejection-sampling recipe for an ill-conditioned Gaussian scenario.

    ``epsilon=None`` sets the noise power to ``max(gamma_m, sigma_m)^2`` so
    that the smallest singular values of both matrices sit at the noise
    floor; ``r=None`` means ``m - 1``.
    """

    n: int = 4
    m: int = 4
    gamma_min_cap: float = 0.01
    cond_min: float = 1e3
    delta_sd: float = 0.01
    kappa: float = 1.75
    max_rejects: int = 200_000
    seed: int = 0
    epsilon: Optional[float] = None
    r: Optional[int] = None
    batch: int = field(default=4096, repr=False)

    def __post_init__(self):
        if self.n < self.m or self.m < 2:
            raise ValueError("need n >= m >= 2")
        for name in ("gamma_min_cap", "cond_min", "delta_sd", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_rejects < 1:
            raise ValueError("max_rejects must be at least 1")


@dataclass(frozen=True)
class Scenario:
    pair: PerturbedPair
    rejects: int
    seed: int

    def to_json(self):
        out = self.pair.to_json()
        out.update({"seed": int(self.seed), "rejects": int(self.rejects)})
        return out


def generate_scenario(cfg: ScenarioConfig, rng=None) -> Scenario:
    """Draw ``H`` until ``gamma_m < gamma_min_cap`` and ``cond(H) >= cond_min``,
    then perturb it with i.i.d. ``N(0, delta_sd^2)`` entries.

    Raises :class:`RejectionExhausted` after ``cfg.max_rejects`` failed draws.
    """
    rng = make_rng(cfg.seed if rng is None else rng)
    rejects = 0
    while rejects < cfg.max_rejects:
        size = min(cfg.batch, cfg.max_rejects - rejects)
        draws = rng.standard_normal((size, cfg.n, cfg.m))
        sv = np.linalg.svd(draws, compute_uv=False)
        ok = (sv[:, -1] < cfg.gamma_min_cap) & (sv[:, 0] >= cfg.cond_min * sv[:, -1])
        hits = np.flatnonzero(ok)
        if hits.size:
            k = int(hits[0])
            rejects += k
            h = draws[k]
            break
        rejects += size
    else:
        raise RejectionExhausted(f"no acceptable H after {cfg.max_rejects} draws")
    delta = cfg.delta_sd * rng.standard_normal((cfg.n, cfg.m))
    if cfg.epsilon is None:
        sigma_m = np.linalg.svd(h + delta, compute_uv=False)[-1]
        gamma_m = np.linalg.svd(h, compute_uv=False)[-1]
        eps = float(max(sigma_m, gamma_m) ** 2)
    else:
        eps = float(cfg.epsilon)
    r = cfg.m - 1 if cfg.r is None else cfg.r
    pair = PerturbedPair.build(h, delta, eps, r, cfg.kappa)
    return Scenario(pair, rejects, cfg.seed)


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    n_samples: int


def _mc_chunk(w, h, root_eps, count, seq):
    rng = np.random.Generator(np.random.PCG64(seq))
    m, n = w.shape[0], h.shape[0]
    x = rng.standard_normal((count, m))
    noise = rng.standard_normal((count, n))
    y = x @ h.T + root_eps * noise
    err = np.sum((y @ w.T - x) ** 2, axis=1)
    mean = float(np.mean(err))
    return count, mean, float(np.sum((err - mean) ** 2))


def monte_carlo_mse(est, truth: LinearModel, n_samples, rng=None, workers=None) -> McResult:
    """Sample ``||W y - x||^2`` with ``y = H x + sqrt(eps) n``.

    Samples are split into fixed-size chunks, each with its own child seed,
    and chunk statistics are merged in chunk order, so the result does not
    depend on ``workers`` (default: ``$RREST_THREADS`` or 1).
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    w = est.w if isinstance(est, EstimatorMatrix) else np.asarray(est, dtype=float)
    root = _seed_sequence(rng)
    sizes = [MC_CHUNK] * (n_samples // MC_CHUNK)
    if n_samples % MC_CHUNK:
        sizes.append(n_samples % MC_CHUNK)
    children = root.spawn(len(sizes))
    root_eps = math.sqrt(truth.epsilon)
    workers = worker_count() if workers is None else workers
    args = [(w, truth.h, root_eps, c, s) for c, s in zip(sizes, children)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _mc_chunk(*a), args))
    else:
        parts = [_mc_chunk(*a) for a in args]
    # pairwise merge of (count, mean, M2) in deterministic order
    count, mean, m2 = parts[0]
    for c, mu, q in parts[1:]:
        total = count + c
        d = mu - mean
        mean += d * c / total
        m2 += q + d * d * count * c / total
        count = total
    var = m2 / (count - 1)
    return McResult(float(mean), float(math.sqrt(var / count)), int(count))


def condition_tail_frequency(m, t, n_samples, rng=None, batch=20000):
    """Empirical ``P(cond(H) > m t)`` for m x m standard Gaussian ``H``."""
    rng = make_rng(rng)
    hits = 0
    done = 0
    while done < n_samples:
        size = min(batch, n_samples - done)
        sv = np.linalg.svd(rng.standard_normal((size, m, m)), compute_uv=False)
        hits += int(np.sum(sv[:, 0] > m * t * sv[:, -1]))
        done += size
    return hits / n_samples


def smallest_sv_frequency(m, t, n_samples, rng=None):
    """Empirical ``P(m gamma_m^2 <= t)`` for m x m standard Gaussian ``H``."""
    import scipy.linalg

    rng = make_rng(rng)
    hits = 0
    for _ in range(n_samples):
        s = scipy.linalg.svdvals(rng.standard_normal((m, m)), check_finite=False)
        hits += bool(m * s[-1] ** 2 <= t)
    return hits / n_samples
