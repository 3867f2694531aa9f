import numpy as np
import pytest

from app.mesh.trimesh import TriMesh, identity_parent_map, make_rect_mesh
from app.models.schemas import AdaptiveConfig, BcSelector, BoundaryTag
from app.services.adapt import fine_mesh_for
from app.services.assembly import assemble_system
from app.services.space import build_prolongation, build_space

ALL_SIDES = BcSelector(constrained_tags=frozenset(
    int(t) for t in (BoundaryTag.LEFT, BoundaryTag.RIGHT, BoundaryTag.BOTTOM, BoundaryTag.TOP)
))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_square():
    return make_rect_mesh((0.0, 1.0), (0.0, 1.0), 1, 1)


@pytest.fixture
def grid3():
    """3x3-vertex grid of the unit square."""
    return make_rect_mesh((0.0, 1.0), (0.0, 1.0), 2, 2)


@pytest.fixture
def reference_triangle():
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def reference_mesh(reference_triangle):
    return TriMesh(
        points=reference_triangle,
        triangles=np.array([[0, 1, 2]]),
        boundary_edges=np.array([[0, 1], [1, 2], [0, 2]]),
        boundary_tags=np.array([BoundaryTag.BOTTOM, BoundaryTag.RIGHT, BoundaryTag.LEFT]),
    )


@pytest.fixture
def all_sides():
    return ALL_SIDES


@pytest.fixture
def nested_system():
    """Factory assembling the saddle system of a problem on a coarse mesh and its refinement."""
    def build(problem, coarse, ratio="half"):
        fine, pm = fine_mesh_for(coarse, ratio)
        trial = build_space(coarse, problem.x_bc, problem.dirichlet)
        test = build_space(fine, problem.y_bc)
        return assemble_system(problem, trial, test, build_prolongation(trial, test, pm))
    return build


@pytest.fixture
def square_system():
    """Factory for the system with trial space equal to test space on one mesh."""
    def build(problem, mesh):
        trial = build_space(mesh, problem.x_bc, problem.dirichlet)
        test = build_space(mesh, problem.y_bc)
        return assemble_system(problem, trial, test, build_prolongation(trial, test, identity_parent_map(mesh)))
    return build


@pytest.fixture
def small_config():
    return AdaptiveConfig(max_levels=3, solver_tol=1e-10)
