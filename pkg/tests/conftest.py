import numpy as np
import pytest

from freqstokes.mesh import Mesh, generate_channel, generate_pipe

UNIT_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
UNIT_TRI = np.array([[0.0, 0], [1, 0], [0, 1]])

#: acceptance verdicts, criterion -> (passed, detail); filled by test_acceptance
VERDICTS: dict = {}


@pytest.fixture(scope="session")
def small_pipe():
    return generate_pipe(1.0, 4.0, 3, 6, 8)


@pytest.fixture(scope="session")
def tiny_pipe():
    return generate_pipe(1.0, 1.0, 2, 4, 2)


@pytest.fixture(scope="session")
def small_channel():
    return generate_channel(1.0, 10.0, 4, 40)


@pytest.fixture
def unit_tet_mesh():
    return Mesh(3, UNIT_TET, [[0, 1, 2, 3]], {"bottom": [[0, 1, 2]]})


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(VERDICTS):
        ok, detail = VERDICTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def steady_pipe_field():
    from freqstokes.solver import solve, traction_driven_case

    mesh = generate_pipe(1.0, 15.0, 4, 6, 30)
    return solve(mesh, traction_driven_case(3, 0.0), alpha=0.0)
