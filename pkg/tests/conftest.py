"""
Test configuration for pytest.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the package to the Python path for testing
sys.path.insert(0, str(Path(__file__).parent.parent))

from hqrn.data import synth_lognormal_regression  # noqa: E402
from hqrn.scoring import ScoreParams  # noqa: E402

SYNTH_COEFFICIENTS = [-0.1, 0.3, -0.2, 0.25]


@pytest.fixture
def rng():
    """Seeded generator shared by randomized property tests."""
    return np.random.default_rng(20240601)


@pytest.fixture
def params():
    """Level and caps used throughout the hand-worked examples."""
    return ScoreParams(tau=0.6, a=0.5, b=0.4)


@pytest.fixture
def small_dataset():
    """A 60-row synthetic dataset with three features."""
    return synth_lognormal_regression(60, 3, SYNTH_COEFFICIENTS, 0.5, seed=3)
