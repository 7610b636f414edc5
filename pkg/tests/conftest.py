import warnings

import pytest

from henon_thermo import inducing as ind
from henon_thermo.henon_core import MapParams
from henon_thermo.manifolds import find_first_bifurcation

# a*(1e-4) for the preserving branch, frozen from a tol 1e-15 solve
A_STAR = 2.0001996430230236

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def desk_params():
    return MapParams(A_STAR, 1e-4, "preserving", 0.5, 22)


@pytest.fixture(scope="session")
def desk_geometry(desk_params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return ind.build_geometry(desk_params)


@pytest.fixture(scope="session")
def desk_system(desk_geometry):
    return ind.first_return_branches(desk_geometry, depth=40)


@pytest.fixture(scope="session")
def astar_solver():
    return find_first_bifurcation


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pipeline_out(tmp_path_factory):
    """Full pipeline plus report at the default desk parameters, run through the CLI."""
    from henon_thermo import cli
    out = tmp_path_factory.mktemp("desk_run")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert cli.main(["pipeline", "--out", str(out)]) == 0
        assert cli.main(["report", "--out", str(out)]) == 0
    return out
