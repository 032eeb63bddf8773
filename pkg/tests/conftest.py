import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppboost.geometry import CovariateStack, QuadratureGrid, Window


@pytest.fixture
def unit_grid():
    return QuadratureGrid(Window.unit(), 16, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def make_stack(window=None, n=16, p=2, seed=0, constant=None):
    """Random (or constant) covariate stack for tests."""
    window = window or Window.unit()
    if constant is not None:
        values = np.full((p, n * n), float(constant))
    else:
        values = np.random.default_rng(seed).normal(size=(p, n * n))
    return CovariateStack(window, n, n, values)
