import numpy as np
import pytest
from hypothesis import settings

from metriplex import systems
from metriplex.fokker_planck import GridModel
from metriplex.grid import PhaseGrid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def canonical():
    return systems.canonical_2d()


@pytest.fixture(scope="session")
def rigid():
    return systems.rigid_body()


@pytest.fixture(scope="session")
def canonical_model(canonical):
    return GridModel(canonical, PhaseGrid.uniform(2, 8.0, 64), D=0.2)


@pytest.fixture(scope="session")
def rigid_model(rigid):
    return GridModel(rigid, PhaseGrid.uniform(3, 4.0, 16), D=0.2)


def pytest_terminal_summary(terminalreporter):
    """One verdict line per acceptance criterion, when that module ran."""
    import sys

    results = {}
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance") and hasattr(mod, "RESULTS"):
            results.update(mod.RESULTS)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
