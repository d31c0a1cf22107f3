import numpy as np
import pytest

from bsim.shapes import box, cube, icosphere, tetrahedron


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture(scope="session")
def ico3():
    return icosphere(3)


@pytest.fixture()
def tetra():
    return tetrahedron()


@pytest.fixture()
def unit_cube():
    return cube()


@pytest.fixture()
def flat_panel():
    """Box with refined faces: interior face vertices sit on flat planes."""
    return box(4.0, 4.0, 2.0).refine(0.9)


def sheared_prism(split_long_diagonal: bool):
    """Closed prism whose top face is a parallelogram split along one diagonal.

    The shear is mild enough that the top diagonal is the only edge whose
    opposite angles sum past pi; the rim edges (top/side hinges) stay below
    the flip threshold, so equiangulation is a pure in-plane retriangulation.
    Only the top four vertices are free.
    """
    top = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 1.2, 0.0], [1.0, 1.2, 0.0]])
    bot = top - [0.0, 0.0, 1.0]
    verts = np.vstack([top, bot])
    if split_long_diagonal:
        top_facets = [(0, 1, 2), (0, 2, 3)]
    else:
        top_facets = [(0, 1, 3), (1, 2, 3)]
    facets = list(top_facets)
    facets += [(4, 6, 5), (4, 7, 6)]  # bottom, outward -z
    for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
        facets += [(a + 4, b + 4, b), (a + 4, b, a)]  # side quads
    fixed = np.array([False] * 4 + [True] * 4)
    from bsim.mesh import TriMesh

    return TriMesh(verts, np.array(facets), fixed=fixed)
