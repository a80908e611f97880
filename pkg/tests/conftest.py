import numpy as np
import pytest

from meshres.mesh import LabeledMesh, TriangleMesh, icosphere


@pytest.fixture(scope="session")
def sphere():
    return icosphere(4)


@pytest.fixture
def unit_tri():
    return TriangleMesh([[0, 0, 0], [3, 0, 0], [0, 3, 0]], [[0, 1, 2]])


@pytest.fixture
def flat_quad():
    verts = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    return TriangleMesh(verts, [[0, 1, 2], [0, 2, 3]])


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def hemisphere_labels(mesh: TriangleMesh) -> LabeledMesh:
    bary = mesh.vertices[mesh.faces].mean(axis=1)
    return LabeledMesh(mesh, (bary[:, 2] > 0).astype(np.int64))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
