"""
Benchmark problems: the L-shape Poisson problem and the heat and wave
equations on 1D-space x time domains.

Fields take an (..., 2) array of points and return an (...,) array; the
second coordinate is y for Poisson and t for heat and wave.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.mesh.trimesh import TriMesh, make_lshape_mesh, make_rect_mesh
from app.models.schemas import BcSelector, BoundaryTag, ProblemKind
from app.services.assembly import DEFAULT_QUAD_DEGREE, QuadRule, element_gradients, quad_rule
from app.services.space import FeSpace, ScalarField
from app.utils.exceptions import InputError

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class ExactSolution:
    value: ScalarField
    gradient: VectorField   # (..., 2) array of (d/dx, d/dy) or (d/dx, d/dt)


@dataclass(frozen=True)
class ProblemDef:
    name: str
    kind: ProblemKind
    source: ScalarField
    x_bc: BcSelector
    y_bc: BcSelector
    dirichlet: Optional[ScalarField] = None
    exact: Optional[ExactSolution] = None
    x_range: Tuple[float, float] = (0.0, 1.0)
    y_range: Tuple[float, float] = (0.0, 1.0)
    initial_grid: Tuple[int, int] = (2, 2)
    default_theta: float = 0.5

    def initial_mesh(self, nx: Optional[int] = None, ny: Optional[int] = None) -> TriMesh:
        if self.kind == ProblemKind.POISSON:
            return make_lshape_mesh(nx or 1)
        gx, gy = self.initial_grid
        mesh = make_rect_mesh(self.x_range, self.y_range, nx or gx, ny or gy)
        if self.kind == ProblemKind.WAVE:
            aligned = characteristic_edges(mesh)
            if len(aligned):
                logger.warning(
                    f"{self.name}: {len(aligned)} initial mesh edges lie on characteristics, "
                    f"kinks across them do not enter the wave residual"
                )
        return mesh


def characteristic_edges(mesh: TriMesh, tol: float = 1e-10) -> np.ndarray:
    """
    Edges along x + t = const or x - t = const. The jump of a P1 gradient
    across such an edge drops out of the wave form, since n_x^2 = n_t^2 there.
    """
    edges, _ = mesh.edges()
    d = mesh.points[edges[:, 1]] - mesh.points[edges[:, 0]]
    return edges[np.abs(np.abs(d[:, 0]) - np.abs(d[:, 1])) <= tol * np.linalg.norm(d, axis=1)]


def _split(points):
    points = np.asarray(points, dtype=float)
    return points[..., 0], points[..., 1]


def _bc(*tags) -> BcSelector:
    return BcSelector(constrained_tags=frozenset(int(t) for t in tags))


# ---------------------------------------------------------------- Poisson

def _lshape_polar(points):
    x, y = _split(points)
    r = np.hypot(x, y)
    phi = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    return r, phi


def _lshape_value(points):
    r, phi = _lshape_polar(points)
    return r ** (2.0 / 3.0) * np.sin(2.0 * phi / 3.0)


def _lshape_gradient(points):
    r, phi = _lshape_polar(points)
    safe = np.where(r > 0.0, r, 1.0)
    scale = np.where(r > 0.0, 2.0 / 3.0 * safe ** (-1.0 / 3.0), 0.0)
    return np.stack([-scale * np.sin(phi / 3.0), scale * np.cos(phi / 3.0)], axis=-1)


def poisson_lshape() -> ProblemDef:
    full = _bc(BoundaryTag.DIRICHLET)
    return ProblemDef(
        name="poisson_lshape",
        kind=ProblemKind.POISSON,
        source=lambda points: np.zeros(np.shape(points)[:-1]),
        x_bc=full,
        y_bc=full,
        dirichlet=_lshape_value,
        exact=ExactSolution(_lshape_value, _lshape_gradient),
        x_range=(-1.0, 1.0),
        y_range=(-1.0, 1.0),
        initial_grid=(1, 1),
    )


# ---------------------------------------------------------- smooth band

SMOOTH_X_RANGE = (0.0, 3.0)
SMOOTH_T_RANGE = (0.0, 6.0)
_K = np.pi / 3.0


def _band(points):
    """Profile factors of u = g(t - x) * sin(pi x / 3) and their derivatives."""
    x, t = _split(points)
    s = t - x
    inside = (s >= 0.0) & (s <= 2.0)
    q = s * (s - 2.0)
    dq = 2.0 * s - 2.0
    g = np.where(inside, -0.5 * q ** 3, 0.0)
    dg = np.where(inside, -1.5 * q ** 2 * dq, 0.0)
    ddg = np.where(inside, -3.0 * q * dq ** 2 - 3.0 * q ** 2, 0.0)
    S = np.sin(_K * x)
    dS = _K * np.cos(_K * x)
    ddS = -_K ** 2 * S
    return g, dg, ddg, S, dS, ddS


def smooth_value(points):
    g, _, _, S, _, _ = _band(points)
    return g * S


def smooth_gradient(points):
    g, dg, _, S, dS, _ = _band(points)
    return np.stack([-dg * S + g * dS, dg * S], axis=-1)


def _smooth_dxx(g, dg, ddg, S, dS, ddS):
    return ddg * S - 2.0 * dg * dS + g * ddS


def smooth_heat_source(points):
    g, dg, ddg, S, dS, ddS = _band(points)
    return dg * S - _smooth_dxx(g, dg, ddg, S, dS, ddS)


def smooth_wave_source(points):
    g, dg, ddg, S, dS, ddS = _band(points)
    return ddg * S - _smooth_dxx(g, dg, ddg, S, dS, ddS)


# ---------------------------------------------------- heat and wave setup

def _heat(name, source, **kwargs) -> ProblemDef:
    return ProblemDef(
        name=name,
        kind=ProblemKind.HEAT,
        source=source,
        x_bc=_bc(BoundaryTag.LEFT, BoundaryTag.RIGHT, BoundaryTag.BOTTOM),
        y_bc=_bc(BoundaryTag.LEFT, BoundaryTag.RIGHT),
        **kwargs,
    )


def _wave(name, source, **kwargs) -> ProblemDef:
    return ProblemDef(
        name=name,
        kind=ProblemKind.WAVE,
        source=source,
        x_bc=_bc(BoundaryTag.LEFT, BoundaryTag.RIGHT, BoundaryTag.BOTTOM),
        y_bc=_bc(BoundaryTag.LEFT, BoundaryTag.RIGHT, BoundaryTag.TOP),
        **kwargs,
    )


def _constant(value: float) -> ScalarField:
    return lambda points: np.full(np.shape(points)[:-1], value, dtype=float)


def initial_trace(u0: float, x_range=(0.0, 1.0)) -> ScalarField:
    """u0 on the closed bottom side {t = 0}, zero on the rest of the boundary (u0 wins at corners)."""
    x0, x1 = x_range

    def data(points):
        x, t = _split(points)
        bottom = (x >= x0 - BOUNDARY_TOL) & (x <= x1 + BOUNDARY_TOL) & (np.abs(t) <= BOUNDARY_TOL)
        return np.where(bottom, u0, 0.0)

    return data


def heat_smooth() -> ProblemDef:
    return _heat(
        "heat_smooth",
        smooth_heat_source,
        exact=ExactSolution(smooth_value, smooth_gradient),
        x_range=SMOOTH_X_RANGE,
        y_range=SMOOTH_T_RANGE,
        initial_grid=(2, 4),
    )


def discontinuous_source(points):
    x, t = _split(points)
    in_window = (x > 0.0) & (x < 1.0) & (t > 0.1) & (t < 0.5)
    in_band = (x - 0.1 <= t) & (t <= x - 0.05)
    return np.where(in_window & in_band, 1.0, 0.0)


def heat_discontinuous() -> ProblemDef:
    return _heat("heat_discontinuous", discontinuous_source, initial_grid=(4, 4))


def heat_incompatible() -> ProblemDef:
    return _heat(
        "heat_incompatible",
        _constant(2.0),
        dirichlet=initial_trace(1.0),
        initial_grid=(4, 4),
        default_theta=0.9,
    )


def wave_smooth() -> ProblemDef:
    return _wave(
        "wave_smooth",
        smooth_wave_source,
        exact=ExactSolution(smooth_value, smooth_gradient),
        x_range=SMOOTH_X_RANGE,
        y_range=SMOOTH_T_RANGE,
        # 1.5 x 2 cells: bisection and red refinement keep all edges off the characteristics
        initial_grid=(2, 3),
    )


def wave_incompatible() -> ProblemDef:
    # the initial velocity g = 0 is a natural condition and adds no term
    return _wave(
        "wave_incompatible",
        _constant(2.0),
        dirichlet=initial_trace(1.0),
        initial_grid=(3, 4),
        default_theta=0.9,
    )


PROBLEMS: Dict[str, Callable[[], ProblemDef]] = {
    "poisson_lshape": poisson_lshape,
    "heat_smooth": heat_smooth,
    "heat_discontinuous": heat_discontinuous,
    "heat_incompatible": heat_incompatible,
    "wave_smooth": wave_smooth,
    "wave_incompatible": wave_incompatible,
}


def get_problem(name: str) -> ProblemDef:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise InputError(f"unknown problem '{name}', choose one of {sorted(PROBLEMS)}")


# ------------------------------------------------------------------ errors

def compute_errors(space: FeSpace, coeffs: np.ndarray, exact: Optional[ExactSolution],
                   kind: ProblemKind, quad: Optional[QuadRule] = None) -> Tuple[float, float]:
    """
    L2 error and energy error of the P1 function `coeffs` (total DOFs)
    against `exact`; the energy error uses only d/dx for the heat equation.
    """
    if exact is None:
        raise InputError("error computation needs an exact solution")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.total_dofs,):
        raise InputError(f"expected {space.total_dofs} coefficients, got {coeffs.shape}")
    quad = quad or quad_rule(DEFAULT_QUAD_DEGREE)
    mesh = space.mesh
    coords = mesh.coordinates()
    grads, areas = element_gradients(coords)
    local = coeffs[mesh.triangles]

    xq = np.einsum("qi,tic->tqc", quad.points, coords)
    uh = np.einsum("qi,ti->tq", quad.points, local)
    u = np.asarray(exact.value(xq), dtype=float)
    du = np.asarray(exact.gradient(xq), dtype=float)
    duh = np.einsum("tic,ti->tc", grads, local)[:, None, :]
    diff = du - duh
    if ProblemKind(kind) == ProblemKind.HEAT:
        energy_density = diff[..., 0] ** 2
    else:
        energy_density = (diff ** 2).sum(axis=-1)

    err_l2 = areas @ (((u - uh) ** 2) @ quad.weights)
    err_energy = areas @ (energy_density @ quad.weights)
    return float(np.sqrt(err_l2)), float(np.sqrt(err_energy))
