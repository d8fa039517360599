import numpy as np
import pytest

from emgalign.features import extract_matrix
from emgalign.synth import CohortConfig, generate_cohort


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(CohortConfig(n_subjects=3, windows_per_gesture=20, seed=3))


@pytest.fixture(scope="session")
def small_features(small_cohort):
    return extract_matrix(small_cohort)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
