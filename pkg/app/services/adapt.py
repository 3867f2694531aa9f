import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from app.mesh.trimesh import ParentMap, TriMesh, bisect, compose, uniform_refine
from app.models.schemas import AdaptiveConfig, ProblemKind, RunRecord
from app.services.assembly import AssembledSystem, assemble_system, element_gradients
from app.services.problems import ProblemDef, compute_errors
from app.services.solver import (SaddleSolution, infsup_constant, solve_saddle,
                                 x_norm_operator, y_norm)
from app.services.space import build_prolongation, build_space, prolongate
from app.utils.exceptions import InputError, StratumError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorField:
    fine_eta_sq: np.ndarray
    coarse_eta_sq: np.ndarray

    @property
    def total(self) -> float:
        return float(self.fine_eta_sq.sum())


@dataclass
class StudyResult:
    """Records and coarse meshes of a refinement study, plus the error that stopped it, if any."""
    records: List[RunRecord] = field(default_factory=list)
    meshes: List[TriMesh] = field(default_factory=list)
    error: Optional[Exception] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class LevelResult:
    record: RunRecord
    system: AssembledSystem
    solution: SaddleSolution
    indicators: IndicatorField
    fine_mesh: TriMesh


def local_indicators(kind: ProblemKind, fine_mesh: TriMesh, p: np.ndarray,
                     parent_map: Optional[ParentMap] = None) -> IndicatorField:
    """
    Squared Y-seminorm of the P1 function p per fine triangle (x-derivative
    only for the heat equation), summed over descendants per coarse triangle.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (fine_mesh.n_vertices,):
        raise InputError(f"expected {fine_mesh.n_vertices} coefficients, got {p.shape}")
    grads, areas = element_gradients(fine_mesh.coordinates())
    grad_p = np.einsum("tic,ti->tc", grads, p[fine_mesh.triangles])
    if ProblemKind(kind) == ProblemKind.HEAT:
        fine = areas * grad_p[:, 0] ** 2
    else:
        fine = areas * (grad_p ** 2).sum(axis=1)
    if parent_map is None:
        coarse = fine.copy()
    else:
        coarse = np.bincount(parent_map.child_to_parent, weights=fine,
                             minlength=parent_map.n_coarse_triangles)
    return IndicatorField(fine, coarse)


def dorfler_mark(eta_sq: np.ndarray, theta: float) -> np.ndarray:
    """Fewest elements whose squared indicators sum to at least theta times the total."""
    if not (0.0 < theta <= 1.0):
        raise InputError(f"theta must lie in (0, 1], got {theta}")
    eta_sq = np.asarray(eta_sq, dtype=float)
    if np.any(eta_sq < 0.0):
        raise InputError("indicators must be nonnegative")
    # largest first, ties by ascending id
    order = np.lexsort((np.arange(eta_sq.size), -eta_sq))
    cumulative = np.cumsum(eta_sq[order])
    if cumulative.size == 0 or cumulative[-1] <= 0.0:
        return np.zeros(0, dtype=np.int64)
    count = int(np.searchsorted(cumulative, theta * cumulative[-1], side="left")) + 1
    return np.sort(order[:count])


def fine_mesh_for(coarse: TriMesh, ratio: str) -> Tuple[TriMesh, ParentMap]:
    """Test mesh with h = H/2 (one red refinement) or h = H/4 (two)."""
    fine, pm = uniform_refine(coarse)
    if ratio == "quarter":
        finer, pm2 = uniform_refine(fine)
        fine, pm = finer, compose(pm, pm2)
    return fine, pm


def solve_level(problem: ProblemDef, coarse: TriMesh, config: AdaptiveConfig, level: int = 0,
                guess: Optional[np.ndarray] = None) -> LevelResult:
    """One solve on `coarse`; `guess` is a total-DOF trial vector to start the Schur CG from."""
    fine, pm = fine_mesh_for(coarse, config.refine_ratio)
    trial = build_space(coarse, problem.x_bc, problem.dirichlet)
    test = build_space(fine, problem.y_bc)
    system = assemble_system(problem, trial, test, build_prolongation(trial, test, pm))
    u0 = None if guess is None else np.asarray(guess, dtype=float)[trial.free_dofs]
    solution = solve_saddle(system, config.solver_tol, u0=u0)

    p_full = system.expand_p(solution.p)
    indicators = local_indicators(problem.kind, fine, p_full, pm)
    error_l2 = error_energy = infsup = None
    if problem.exact is not None:
        error_l2, error_energy = compute_errors(trial, system.expand_u(solution.u), problem.exact, problem.kind)
    if config.infsup and trial.n_free:
        infsup = infsup_constant(system, x_norm_operator(system))

    record = RunRecord(
        level=level,
        total_dofs_coarse=coarse.n_vertices,
        free_dofs_coarse=trial.n_free,
        free_dofs_fine=test.n_free,
        error_l2=error_l2,
        error_energy=error_energy,
        estimator=y_norm(system.A, solution.p),
        infsup=infsup,
        solver_iterations=solution.iterations,
    )
    return LevelResult(record, system, solution, indicators, fine)


def _run(problem: ProblemDef, mesh: TriMesh, config: AdaptiveConfig, adaptive: bool) -> StudyResult:
    result = StudyResult()
    strategy = "adaptive" if adaptive else "uniform"
    coarse = mesh
    guess = None
    levels = tqdm(range(config.max_levels), desc=f"{problem.name} {strategy}", disable=not config.progress)
    for level in levels:
        if coarse.n_vertices > config.max_dofs:
            logger.warning(
                f"{problem.name}: stopping before level {level}, "
                f"{coarse.n_vertices} coarse DOFs exceed max_dofs={config.max_dofs}"
            )
            break
        try:
            outcome = solve_level(problem, coarse, config, level, guess)
        except StratumError as e:
            logger.error(f"{problem.name} {strategy} level {level} failed: {e}")
            result.error = e
            break
        record = outcome.record
        result.records.append(record)
        result.meshes.append(coarse)
        logger.info(
            f"{problem.name} {strategy} L={level}: nv={record.total_dofs_coarse} "
            f"M_X={record.free_dofs_coarse} M_Y={record.free_dofs_fine} "
            f"estimator={record.estimator:.4e} error={record.error_energy} "
            f"cg={record.solver_iterations}"
        )
        if level + 1 == config.max_levels:
            break
        if adaptive:
            marked = dorfler_mark(outcome.indicators.coarse_eta_sq, config.theta)
            logger.debug(f"marked {len(marked)} of {coarse.n_triangles} triangles")
            coarse, pm = bisect(coarse, marked)
        else:
            coarse, pm = uniform_refine(coarse)
        guess = prolongate(outcome.system.expand_u(outcome.solution.u), pm)
    return result


def adaptive_solve(problem: ProblemDef, mesh: TriMesh, config: AdaptiveConfig) -> StudyResult:
    return _run(problem, mesh, config, adaptive=True)


def uniform_solve(problem: ProblemDef, mesh: TriMesh, config: AdaptiveConfig) -> StudyResult:
    return _run(problem, mesh, config, adaptive=False)
