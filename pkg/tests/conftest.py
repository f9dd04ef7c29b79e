import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stripstab.hopf import hopf_coefficients  # noqa: E402
from stripstab.neutral import find_alpha_plus  # noqa: E402
from stripstab.profiles import poiseuille  # noqa: E402
from stripstab.specgrid import build_discretization  # noqa: E402


@lru_cache(maxsize=None)
def grid(n):
    return build_discretization(n)


@pytest.fixture(scope="session")
def pois():
    return poiseuille()


@pytest.fixture(scope="session")
def neutral_8e5(pois):
    return find_alpha_plus(pois, 8e-5, (2.0, 2.3), grid(128))


@pytest.fixture(scope="session")
def hopf_8e5(pois, neutral_8e5):
    return hopf_coefficients(pois, neutral_8e5, grid(128))
