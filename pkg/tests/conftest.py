import os
import sys

import numpy as np
import pytest

# Flat layout: the modules live at the repository root.
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from polytope import (bl1p2_anticanonical, interval, p1xp1_anticanonical, p2_anticanonical,  # noqa: E402
                      unit_simplex, unit_square)


@pytest.fixture
def p1():
    return interval(-1, 1)


@pytest.fixture
def unit_interval():
    return interval(0, 1)


@pytest.fixture
def skew_interval():
    return interval(-1, 2)


@pytest.fixture
def simplex():
    return unit_simplex(2)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def p2():
    return p2_anticanonical()


@pytest.fixture
def p1xp1():
    return p1xp1_anticanonical()


@pytest.fixture
def bl1p2():
    return bl1p2_anticanonical()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
