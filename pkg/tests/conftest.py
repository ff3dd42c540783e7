import numpy as np
import pytest

from tripartite.cohort import Cohort


def random_cohort(rng: np.random.Generator, n: int, ties: bool = False, shift: float = 1.0) -> Cohort:
    """Two-status cohort with normal scores; ``ties`` rounds scores to a coarse grid."""
    while True:
        z = (rng.random(n) < 0.4).astype(int)
        if 0 < z.sum() < n:
            break
    s = rng.normal(size=n) + shift * z
    if ties:
        s = np.round(s * 2) / 2
    return Cohort(s, z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
