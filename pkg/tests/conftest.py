import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from annealtemp.model import IsingModel
from annealtemp.topology import ChimeraSpec, build_chimera, gen_ran1

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_model(n, density=0.4, seed=0, with_fields=True):
    rng = np.random.default_rng(seed)
    edges = [(i, j, rng.normal()) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    h = rng.normal(size=n) if with_fields else None
    return IsingModel.from_edges(n, edges, h, {"label": f"rand{n}-{seed}"})


def ring(n, w=-1.0):
    return IsingModel.from_edges(n, [(i, (i + 1) % n, w) for i in range(n)])


@pytest.fixture(scope="session")
def c2_graph():
    return build_chimera(ChimeraSpec.square(2))


@pytest.fixture(scope="session")
def c2_model(c2_graph):
    return gen_ran1(c2_graph, 0)


@pytest.fixture
def single_spin():
    return IsingModel.from_edges(1, [], [1.0])


@pytest.fixture
def pair_up():
    return IsingModel.from_edges(2, [(0, 1, 1.0)])


ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str = "") -> None:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
