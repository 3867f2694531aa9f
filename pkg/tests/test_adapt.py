import numpy as np
import pytest

from app.mesh.trimesh import bisect, make_lshape_mesh, uniform_refine
from app.models.schemas import AdaptiveConfig, ProblemKind
from app.services import adapt
from app.services.adapt import (adaptive_solve, dorfler_mark, fine_mesh_for, local_indicators,
                                solve_level, uniform_solve)
from app.services.assembly import assemble_matrix
from app.services.problems import get_problem
from app.services.solver import y_norm
from app.utils.exceptions import ConvergenceError, InputError


def test_indicators_of_zero_are_zero(grid3):
    field = local_indicators(ProblemKind.WAVE, grid3, np.zeros(grid3.n_vertices))
    np.testing.assert_array_equal(field.fine_eta_sq, 0.0)
    assert field.total == 0.0


def test_indicator_of_reference_hat(reference_mesh):
    field = local_indicators(ProblemKind.POISSON, reference_mesh, np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(field.fine_eta_sq, [0.5])


def test_indicators_sum_to_squared_y_norm(grid3, rng):
    fine, pm = uniform_refine(grid3)
    p = rng.standard_normal(fine.n_vertices)
    for kind in (ProblemKind.POISSON, ProblemKind.HEAT, ProblemKind.WAVE):
        field = local_indicators(kind, fine, p, pm)
        A = assemble_matrix(fine, kind, "A")
        assert field.total == pytest.approx(y_norm(A, p) ** 2, rel=1e-12)
        assert field.coarse_eta_sq.sum() == pytest.approx(field.total, rel=1e-12)
        assert len(field.coarse_eta_sq) == grid3.n_triangles
        assert np.all(field.fine_eta_sq >= 0)


def test_heat_indicator_ignores_time_derivative(grid3):
    p = grid3.points[:, 1].copy()
    assert local_indicators(ProblemKind.HEAT, grid3, p).total == pytest.approx(0.0, abs=1e-14)
    assert local_indicators(ProblemKind.WAVE, grid3, p).total == pytest.approx(1.0, rel=1e-12)


def test_indicator_dimension_mismatch(grid3):
    with pytest.raises(InputError):
        local_indicators(ProblemKind.POISSON, grid3, np.zeros(3))


@pytest.mark.parametrize("eta_sq, theta, expected", [
    ([4.0, 3.0, 2.0, 1.0], 0.5, [0, 1]),
    ([1.0, 1.0, 1.0, 1.0], 0.5, [0, 1]),
    ([0.0, 2.0, 0.0, 1.0], 1.0, [1, 3]),
    ([1.0, 3.0, 2.0, 4.0], 0.5, [1, 3]),
    ([0.0, 0.0, 0.0], 0.5, []),
])
def test_dorfler_examples(eta_sq, theta, expected):
    np.testing.assert_array_equal(dorfler_mark(np.array(eta_sq), theta), expected)


def test_dorfler_minimality(rng):
    for _ in range(50):
        eta_sq = rng.exponential(size=rng.integers(5, 60))
        theta = rng.uniform(0.1, 0.95)
        marked = dorfler_mark(eta_sq, theta)
        assert eta_sq[marked].sum() >= theta * eta_sq.sum() * (1 - 1e-12)
        weakest = marked[np.argmin(eta_sq[marked])]
        rest = np.setdiff1d(marked, [weakest])
        assert eta_sq[rest].sum() < theta * eta_sq.sum()


@pytest.mark.parametrize("theta", [0.0, 1.5])
def test_dorfler_rejects_theta(theta):
    with pytest.raises(InputError):
        dorfler_mark(np.ones(3), theta)


def test_fine_mesh_ratio(grid3):
    half, pm_half = fine_mesh_for(grid3, "half")
    quarter, pm_quarter = fine_mesh_for(grid3, "quarter")
    assert half.n_triangles == 4 * grid3.n_triangles
    assert quarter.n_triangles == 16 * grid3.n_triangles
    assert pm_quarter.n_steps == 2
    assert np.all(np.bincount(pm_quarter.child_to_parent) == 16)


def test_solve_level_record(small_config):
    problem = get_problem("heat_smooth")
    mesh = problem.initial_mesh()
    outcome = solve_level(problem, mesh, small_config)
    record = outcome.record
    assert record.level == 0
    assert record.total_dofs_coarse == mesh.n_vertices
    assert record.free_dofs_coarse == 4
    assert record.free_dofs_fine == outcome.system.shape[0]
    assert record.estimator == pytest.approx(np.sqrt(outcome.indicators.total), rel=1e-10)
    assert record.error_energy > 0
    assert record.infsup is None


def test_max_levels_one_leaves_mesh_untouched():
    problem = get_problem("heat_discontinuous")
    mesh = problem.initial_mesh()
    result = adaptive_solve(problem, mesh, AdaptiveConfig(max_levels=1))
    assert result.ok
    assert len(result.records) == 1
    assert len(result.meshes) == 1
    assert result.meshes[0] is mesh
    assert result.records[0].error_energy is None


def test_uniform_solve_quadruples_triangles(small_config):
    problem = get_problem("wave_smooth")
    result = uniform_solve(problem, problem.initial_mesh(), small_config)
    assert [r.level for r in result.records] == [0, 1, 2]
    counts = [m.n_triangles for m in result.meshes]
    assert counts[1] == 4 * counts[0]
    assert counts[2] == 4 * counts[1]
    energy = [r.error_energy for r in result.records]
    assert energy[2] < energy[0]


def test_adaptive_dofs_grow(small_config):
    problem = get_problem("heat_smooth")
    result = adaptive_solve(problem, problem.initial_mesh(), small_config.model_copy(update={"max_levels": 4}))
    dofs = [r.total_dofs_coarse for r in result.records]
    assert len(dofs) == 4
    assert all(a < b for a, b in zip(dofs, dofs[1:]))


def test_max_dofs_truncates_study():
    problem = get_problem("heat_smooth")
    result = uniform_solve(problem, problem.initial_mesh(), AdaptiveConfig(max_levels=5, max_dofs=60))
    assert result.ok
    assert [r.total_dofs_coarse for r in result.records] == [15, 45]


def test_infsup_column(small_config):
    problem = get_problem("heat_smooth")
    config = small_config.model_copy(update={"infsup": True, "max_levels": 2})
    result = uniform_solve(problem, problem.initial_mesh(), config)
    assert all(r.infsup >= 1.0 - 1e-6 for r in result.records)


def test_solver_failure_returns_partial_records(monkeypatch, small_config):
    calls = []
    original = adapt.solve_saddle

    def failing(system, tol, **kwargs):
        calls.append(tol)
        if len(calls) == 2:
            raise ConvergenceError("stalled", iterations=1)
        return original(system, tol, **kwargs)

    monkeypatch.setattr(adapt, "solve_saddle", failing)
    problem = get_problem("heat_smooth")
    result = adaptive_solve(problem, problem.initial_mesh(), small_config)
    assert not result.ok
    assert isinstance(result.error, ConvergenceError)
    assert len(result.records) == 1


def test_poisson_adaptive_estimator_decreases_and_is_efficient():
    problem = get_problem("poisson_lshape")
    result = adaptive_solve(problem, make_lshape_mesh(), AdaptiveConfig(theta=0.5, max_levels=8))
    assert result.ok
    estimators = [r.estimator for r in result.records]
    assert len(estimators) == 8
    assert all(a > b for a, b in zip(estimators, estimators[1:]))
    for record in result.records:
        assert record.estimator <= record.error_energy + 1e-8


def test_poisson_adaptive_refines_towards_corner():
    problem = get_problem("poisson_lshape")
    result = adaptive_solve(problem, make_lshape_mesh(), AdaptiveConfig(theta=0.5, max_levels=16))
    assert result.ok
    final = result.meshes[-1]
    areas = final.areas()
    near = np.linalg.norm(final.centroids(), axis=1) < 0.25
    assert areas[near].min() < 0.1 * areas[~near].min()
    assert areas[near].mean() < areas[~near].mean()


def test_bisect_of_marked_set_matches_loop_step():
    problem = get_problem("heat_smooth")
    mesh = problem.initial_mesh()
    config = AdaptiveConfig(max_levels=2)
    outcome = solve_level(problem, mesh, config)
    marked = dorfler_mark(outcome.indicators.coarse_eta_sq, config.theta)
    expected, _ = bisect(mesh, marked)
    result = adaptive_solve(problem, mesh, config)
    np.testing.assert_array_equal(result.meshes[1].points, expected.points)
    np.testing.assert_array_equal(result.meshes[1].triangles, expected.triangles)


def test_levels_start_from_the_previous_solution(monkeypatch, small_config):
    guesses = []
    original = adapt.solve_saddle

    def recording(system, tol, **kwargs):
        guesses.append((system.shape[1], kwargs.get("u0")))
        return original(system, tol, **kwargs)

    monkeypatch.setattr(adapt, "solve_saddle", recording)
    problem = get_problem("heat_smooth")
    result = adaptive_solve(problem, problem.initial_mesh(), small_config)
    assert result.ok
    assert guesses[0][1] is None
    for m_x, u0 in guesses[1:]:
        assert u0.shape == (m_x,)
        assert np.abs(u0).max() > 0.0
