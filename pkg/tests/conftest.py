import time

import pytest

from surfctrl.geometry import make_surface
from surfctrl.harness import StudyConfig, run_study
from surfctrl.manufactured import Benchmark
from surfctrl.mesh import mesh_hierarchy


@pytest.fixture(scope="session")
def studies():
    """All four benchmark studies at their default refinement ranges.

    Expensive (the torus levels dominate, ~20 minutes); computed once per
    session and shared by every table-level check.  Values are
    (rows, wall_seconds) per benchmark.
    """
    out = {}
    for bench in Benchmark:
        t0 = time.perf_counter()
        rows = run_study(StudyConfig(benchmark=bench))
        out[bench] = (rows, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def sphere_setup():
    surface = make_surface("sphere")
    return surface, mesh_hierarchy(surface, 6)


@pytest.fixture(scope="session")
def torus_setup():
    surface = make_surface("torus")
    return surface, mesh_hierarchy(surface, 4)


@pytest.fixture(scope="session")
def graph_setup():
    surface = make_surface("graph")
    return surface, mesh_hierarchy(surface, 4)
