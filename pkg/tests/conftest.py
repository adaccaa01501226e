import numpy as np
import pytest

from pencil_psa.fixtures import random_linear_dae

N_RANDOM = 100


def random_fixtures(n=N_RANDOM, seed=20240601):
    """Seeded random linear DAEs with 1 <= nu, mu <= 5 and cond(g_y) < 1e3."""
    rng = np.random.default_rng(seed)
    return [random_linear_dae(rng) for _ in range(n)]


def match_sets(a, b):
    """Largest distance between two multisets of complex values after greedy pairing."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    assert len(a) == len(b), (a, b)
    worst = 0.0
    for v in a:
        j = int(np.argmin([abs(v - w) for w in b]))
        worst = max(worst, abs(v - b[j]) / max(1.0, abs(v)))
        b.pop(j)
    return worst


@pytest.fixture(scope="session")
def fixtures100():
    return random_fixtures()
