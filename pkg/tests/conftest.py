import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sampledefect.fixtures import calluna_population, calluna_sample  # noqa: E402
from sampledefect.population import Population, SampleMembership  # noqa: E402


@pytest.fixture(scope="session")
def calluna():
    return calluna_population(), calluna_sample()


@pytest.fixture
def tiny():
    """y = (1, 1, 0, 0) with the two ones sampled."""
    pop = Population(["A", "B", "C", "D"], [1, 1, 0, 0])
    return pop, SampleMembership([1, 1, 0, 0])
