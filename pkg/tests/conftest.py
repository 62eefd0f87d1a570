import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rrest.model import PerturbedPair

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# published four-channel example: base/perturbed spectra, noise power, rank, ||dH||
PUBLISHED_GAMMAS = np.array([3.889, 2.426, 0.923, 0.003])
PUBLISHED_SIGMAS = np.array([3.894, 2.435, 0.934, 0.022])
PUBLISHED_EPS = 4.928e-4
PUBLISHED_R = 3
PUBLISHED_DELTA_NORM = 0.034


def haar(k, rng):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def shared_pair(gammas, sigmas, epsilon, r, n=None, seed=0, kappa=1.75):
    """Pair whose base and perturbed matrices share singular vectors."""
    rng = np.random.default_rng(seed)
    m = len(gammas)
    n = m if n is None else n
    u = haar(n, rng)[:, :m]
    v = haar(m, rng)
    h = (u * np.asarray(gammas)) @ v.T
    hp = (u * np.asarray(sigmas)) @ v.T
    return PerturbedPair.build(h, hp - h, epsilon, r, kappa)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_pair():
    g = np.random.default_rng(5)
    h = g.standard_normal((6, 4))
    return PerturbedPair.build(h, 0.05 * g.standard_normal((6, 4)), 0.01, 2)
