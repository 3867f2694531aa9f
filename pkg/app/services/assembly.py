"""
Quadrature, P1 element matrices and global assembly of the saddle system.

All forms live on the fine (test) mesh; the coarse trial space enters through
the prolongation only, B = B_fine @ P.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from app.mesh.trimesh import TriMesh
from app.models.schemas import ProblemKind
from app.services.space import FeSpace, Prolongation, ScalarField
from app.utils.exceptions import InputError

logger = logging.getLogger(__name__)

DEFAULT_QUAD_DEGREE = 4


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray    # (n, 3) barycentric coordinates
    weights: np.ndarray   # (n,) summing to 1, scaled by the triangle area at use
    degree: int


def _symmetric_orbit(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


_RULES = {
    1: (np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0])),
    2: (np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]), np.full(3, 1.0 / 3.0)),
    4: (
        np.concatenate([_symmetric_orbit(0.44594849091596488632), _symmetric_orbit(0.09157621350977074346)]),
        np.concatenate([np.full(3, 0.22338158967801146570), np.full(3, 0.10995174365532186764)]),
    ),
}


def quad_rule(degree: int) -> QuadRule:
    """Symmetric triangle rule exact for polynomials of the given degree (1, 2 or 4)."""
    if degree not in _RULES:
        raise InputError(f"unsupported quadrature degree {degree}, choose one of {sorted(_RULES)}")
    points, weights = _RULES[degree]
    return QuadRule(points.copy(), weights.copy(), degree)


def integrate(mesh: TriMesh, field: ScalarField, quad: QuadRule) -> float:
    """Integral of a scalar field over the mesh domain."""
    xq = np.einsum("qi,tic->tqc", quad.points, mesh.coordinates())
    values = np.asarray(field(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape[:2])
    return float(mesh.areas() @ (values @ quad.weights))


def element_gradients(coords: np.ndarray):
    """
    Constant gradients of the three barycentric basis functions and the
    areas of a stack of triangles, shapes (T, 3, 2) and (T,).
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 3, 2)
    x, y = coords[..., 0], coords[..., 1]
    signed = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    scale = np.abs(coords).max(initial=1.0) ** 2
    if np.any(np.abs(signed) <= 1e-14 * scale):
        raise InputError("zero-area triangle")
    nxt = [1, 2, 0]
    prv = [2, 0, 1]
    grads = np.stack([y[:, nxt] - y[:, prv], x[:, prv] - x[:, nxt]], axis=2) / (2.0 * signed[:, None, None])
    return grads, np.abs(signed)


def _stiffness(grads: np.ndarray, areas: np.ndarray, wx: float, wt: float) -> np.ndarray:
    gx, gt = grads[..., 0], grads[..., 1]
    return areas[:, None, None] * (
        wx * gx[:, :, None] * gx[:, None, :] + wt * gt[:, :, None] * gt[:, None, :]
    )


def _convection(grads: np.ndarray, areas: np.ndarray) -> np.ndarray:
    # entry (i, j) = integral of d_t(phi_j) * phi_i
    return np.repeat((areas[:, None] / 3.0 * grads[..., 1])[:, None, :], 3, axis=1)


def element_matrices(kind: ProblemKind, form: str, coords: np.ndarray) -> np.ndarray:
    """Element matrices (T, 3, 3) of the A-form, the B-form or the time convection."""
    kind = ProblemKind(kind)
    grads, areas = element_gradients(coords)
    if form == "A":
        return _stiffness(grads, areas, 1.0, 0.0 if kind == ProblemKind.HEAT else 1.0)
    if form == "B":
        if kind == ProblemKind.POISSON:
            return _stiffness(grads, areas, 1.0, 1.0)
        if kind == ProblemKind.HEAT:
            return _stiffness(grads, areas, 1.0, 0.0) + _convection(grads, areas)
        return _stiffness(grads, areas, 1.0, -1.0)
    if form == "convection":
        return _convection(grads, areas)
    raise InputError(f"unknown form '{form}'")


def local_A(kind: ProblemKind, tri: np.ndarray) -> np.ndarray:
    return element_matrices(kind, "A", tri)[0]


def local_B(kind: ProblemKind, tri: np.ndarray) -> np.ndarray:
    return element_matrices(kind, "B", tri)[0]


def assemble_matrix(mesh: TriMesh, kind: ProblemKind, form: str) -> sparse.csr_matrix:
    """Global matrix of a form over all vertices, element contributions summed in element order."""
    local = element_matrices(kind, form, mesh.coordinates())
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_load(mesh: TriMesh, field: ScalarField, quad: QuadRule) -> np.ndarray:
    """Load vector (f, phi_j) over all vertices with f sampled at the quadrature nodes."""
    xq = np.einsum("qi,tic->tqc", quad.points, mesh.coordinates())
    values = np.asarray(field(xq.reshape(-1, 2)), dtype=float).reshape(xq.shape[:2])
    local = mesh.areas()[:, None] * np.einsum("q,tq,qi->ti", quad.weights, values, quad.points)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


@dataclass(frozen=True)
class AssembledSystem:
    """Reduced saddle system A p + B u = f - g, B^T p = 0 over free DOFs."""
    kind: ProblemKind
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    f: np.ndarray
    g: np.ndarray
    trial: FeSpace
    test: FeSpace
    prolongation: Prolongation
    trial_stiffness: sparse.csr_matrix
    convection: Optional[sparse.csr_matrix] = None

    @property
    def rhs(self) -> np.ndarray:
        return self.f - self.g

    @property
    def shape(self):
        return self.B.shape

    def expand_u(self, u: np.ndarray) -> np.ndarray:
        return self.trial.expand(u)

    def expand_p(self, p: np.ndarray) -> np.ndarray:
        return self.test.expand(p)


def assemble_system(problem, trial: FeSpace, test: FeSpace, P: Prolongation,
                    quad: Optional[QuadRule] = None) -> AssembledSystem:
    if P.matrix.shape != (test.total_dofs, trial.total_dofs):
        raise InputError(
            f"prolongation shape {P.matrix.shape} does not match spaces "
            f"({test.total_dofs}, {trial.total_dofs})"
        )
    quad = quad or quad_rule(DEFAULT_QUAD_DEGREE)
    kind = ProblemKind(problem.kind)
    fine = test.mesh

    a_full = assemble_matrix(fine, kind, "A")
    b_full = assemble_matrix(fine, kind, "B") @ P.matrix
    load = assemble_load(fine, problem.source, quad)
    lift = b_full @ trial.dirichlet_values + a_full @ test.dirichlet_values

    ft, fx = test.free_dofs, trial.free_dofs
    trial_basis = P.matrix[:, fx]
    convection = None
    if kind == ProblemKind.HEAT:
        convection = sparse.csr_matrix((assemble_matrix(fine, kind, "convection") @ trial_basis)[ft])

    system = AssembledSystem(
        kind=kind,
        A=sparse.csr_matrix(a_full[ft][:, ft]),
        B=sparse.csr_matrix(b_full[ft][:, fx]),
        f=load[ft],
        g=lift[ft],
        trial=trial,
        test=test,
        prolongation=P,
        trial_stiffness=sparse.csr_matrix(trial_basis.T @ a_full @ trial_basis),
        convection=convection,
    )
    logger.debug(f"Assembled {kind.value} system: M_Y={len(ft)}, M_X={len(fx)}, nnz(B)={system.B.nnz}")
    return system
