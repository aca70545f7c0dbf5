import numpy as np
import pytest

from noisemat import PriorVector, TransitionMatrix


def random_informative(rng, k, diag_low=0.6, diag_high=0.95):
    """Random diagonally dominant transition matrix and interior prior.

    Diagonal entries above 0.5 make every row strictly dominant, which also
    guarantees nonsingularity (strict diagonal dominance).
    """
    diag = rng.uniform(diag_low, diag_high, size=k)
    m = np.zeros((k, k))
    for i in range(k):
        off = rng.random(k - 1)
        off = off / off.sum() * (1.0 - diag[i])
        m[i] = np.insert(off, i, diag[i])
    p = rng.uniform(0.5, 1.5, size=k)
    p /= p.sum()
    return TransitionMatrix(m), PriorVector(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
