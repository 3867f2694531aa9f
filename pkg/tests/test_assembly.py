from dataclasses import replace

import numpy as np
import pytest

from app.mesh.trimesh import make_lshape_mesh, make_rect_mesh, uniform_refine
from app.models.schemas import ProblemKind
from app.services.assembly import (assemble_load, assemble_matrix, element_matrices, integrate,
                                   local_A, local_B, quad_rule)
from app.services.problems import get_problem
from app.services.solver import factor_spd, y_norm
from app.services.space import interpolate
from app.utils.exceptions import InputError

KINDS = [ProblemKind.POISSON, ProblemKind.HEAT, ProblemKind.WAVE]


def test_quadrature_exactness(reference_mesh):
    assert integrate(reference_mesh, lambda p: np.ones(len(p)), quad_rule(1)) == pytest.approx(0.5, rel=1e-14)
    assert integrate(reference_mesh, lambda p: p[:, 0] * p[:, 1], quad_rule(2)) == pytest.approx(1 / 24, rel=1e-14)
    assert integrate(reference_mesh, lambda p: p[:, 0] ** 4, quad_rule(4)) == pytest.approx(1 / 30, rel=1e-14)


@pytest.mark.parametrize("degree", [1, 2, 4])
def test_quadrature_weights(degree):
    quad = quad_rule(degree)
    assert quad.weights.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(quad.weights > 0)
    np.testing.assert_allclose(quad.points.sum(axis=1), 1.0)


def test_quadrature_on_rectangle_mesh():
    mesh = make_rect_mesh((0.0, 2.0), (-1.0, 1.0), 3, 2)
    quad = quad_rule(4)
    # x^2 y^2 over the rectangle = (8/3) * (2/3)
    assert integrate(mesh, lambda p: p[:, 0] ** 2 * p[:, 1] ** 2, quad) == pytest.approx(16 / 9, rel=1e-13)


def test_unsupported_degree():
    with pytest.raises(InputError):
        quad_rule(3)


def test_local_A_reference(reference_triangle):
    np.testing.assert_allclose(
        local_A(ProblemKind.POISSON, reference_triangle),
        [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]],
        atol=1e-15,
    )
    np.testing.assert_allclose(
        local_A(ProblemKind.HEAT, reference_triangle),
        [[0.5, -0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 0.0]],
        atol=1e-15,
    )


@pytest.mark.parametrize("kind", KINDS)
def test_local_A_row_sums_vanish(kind, rng):
    tri = rng.uniform(size=(3, 2))
    np.testing.assert_allclose(local_A(kind, tri).sum(axis=1), 0.0, atol=1e-10)


def test_local_B_reference(reference_triangle):
    np.testing.assert_array_equal(
        local_B(ProblemKind.POISSON, reference_triangle), local_A(ProblemKind.POISSON, reference_triangle)
    )
    convection = element_matrices(ProblemKind.HEAT, "convection", reference_triangle)[0]
    np.testing.assert_allclose(convection[:, 0], -1 / 6)
    np.testing.assert_allclose(convection[:, 1], 0.0, atol=1e-15)
    np.testing.assert_allclose(convection[:, 2], 1 / 6)
    np.testing.assert_allclose(
        local_B(ProblemKind.HEAT, reference_triangle), local_A(ProblemKind.HEAT, reference_triangle) + convection
    )

    wave = local_B(ProblemKind.WAVE, reference_triangle)
    np.testing.assert_allclose(wave, [[0.0, -0.5, 0.5], [-0.5, 0.5, 0.0], [0.5, 0.0, -0.5]], atol=1e-15)
    np.testing.assert_allclose(wave, wave.T)


def test_zero_area_triangle():
    with pytest.raises(InputError):
        local_A(ProblemKind.POISSON, np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
    with pytest.raises(InputError):
        element_matrices(ProblemKind.POISSON, "C", np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


def test_load_of_unit_source_sums_to_area(grid3):
    load = assemble_load(grid3, lambda p: np.ones(p.shape[:-1]), quad_rule(4))
    assert load.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(load > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_global_matrix_symmetry_and_row_sums(grid3, kind):
    A = assemble_matrix(grid3, kind, "A")
    assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 0.0, atol=1e-13)


def test_square_poisson_system_has_B_equal_A(square_system):
    system = square_system(get_problem("poisson_lshape"), make_lshape_mesh(2))
    np.testing.assert_array_equal(system.A.toarray(), system.B.toarray())
    assert system.convection is None


def test_zero_source_and_data_give_zero_load(nested_system):
    problem = get_problem("heat_discontinuous")
    zero = replace(problem, source=lambda p: np.zeros(p.shape[:-1]))
    system = nested_system(zero, make_rect_mesh((0.0, 1.0), (0.0, 1.0), 2, 2))
    np.testing.assert_array_equal(system.f, 0.0)
    np.testing.assert_array_equal(system.g, 0.0)


@pytest.mark.parametrize("name", ["poisson_lshape", "heat_smooth", "wave_smooth", "heat_incompatible"])
@pytest.mark.parametrize("ratio", ["half", "quarter"])
def test_assembled_system_shapes_and_definiteness(nested_system, name, ratio):
    problem = get_problem(name)
    system = nested_system(problem, problem.initial_mesh(), ratio)
    m_y, m_x = system.shape
    assert system.A.shape == (m_y, m_y)
    assert m_x == system.trial.n_free
    assert m_y == system.test.n_free
    assert system.f.shape == system.g.shape == (m_y,)
    assert abs(system.A - system.A.T).max() <= 1e-13 * abs(system.A).max()
    factor_spd(system.A)
    if problem.kind == ProblemKind.HEAT:
        assert system.convection.shape == (m_y, m_x)


def test_incompatible_data_enters_the_lift(nested_system):
    problem = get_problem("heat_incompatible")
    system = nested_system(problem, problem.initial_mesh())
    assert np.abs(system.g).max() > 0.0


def test_assembly_is_deterministic(nested_system):
    problem = get_problem("wave_smooth")
    first = nested_system(problem, problem.initial_mesh())
    second = nested_system(problem, problem.initial_mesh())
    np.testing.assert_array_equal(first.A.toarray(), second.A.toarray())
    np.testing.assert_array_equal(first.B.toarray(), second.B.toarray())
    np.testing.assert_array_equal(first.f, second.f)


def test_wave_form_does_not_see_kinks_along_characteristics():
    mesh = make_rect_mesh((0.0, 1.0), (0.0, 1.0), 4, 4)
    x, t = mesh.points.T
    # kink on the mesh diagonal t = x
    u = np.maximum(t - x, 0.0)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), np.unique(mesh.boundary_edges))
    wave = assemble_matrix(mesh, ProblemKind.WAVE, "B") @ u
    poisson = assemble_matrix(mesh, ProblemKind.POISSON, "B") @ u
    np.testing.assert_allclose(wave[interior], 0.0, atol=1e-14)
    assert np.abs(poisson[interior]).max() == pytest.approx(0.5)


def test_interpolant_residual_is_first_order_for_smooth_heat(nested_system):
    problem = get_problem("heat_smooth")
    mesh = problem.initial_mesh()
    residuals = []
    for _ in range(4):
        mesh, _ = uniform_refine(mesh)
        system = nested_system(problem, mesh)
        u_interp = interpolate(system.trial, problem.exact.value)[system.trial.free_dofs]
        r = system.rhs - system.B @ u_interp
        residuals.append(y_norm(system.A, factor_spd(system.A).solve(r)))
    ratios = np.array(residuals[:-1]) / np.array(residuals[1:])
    assert np.all(ratios > 1.0)
    # halving H halves the dual norm of <f - B u_I, q>
    assert 1.5 < ratios[-1] < 3.0
