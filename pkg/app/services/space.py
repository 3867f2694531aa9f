import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse

from app.mesh.trimesh import ParentMap, TriMesh
from app.models.schemas import BcSelector
from app.utils.exceptions import InputError

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]
LOCATE_TOL = 1e-12
LOCATE_CHUNK = 256


@dataclass(frozen=True)
class FeSpace:
    """Continuous P1 space on a mesh with nodal essential constraints."""
    mesh: TriMesh
    free_dofs: np.ndarray
    constrained_dofs: np.ndarray
    dirichlet_values: np.ndarray   # full length, zero on free vertices

    @property
    def total_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def expand(self, free_coeffs: np.ndarray) -> np.ndarray:
        """Full coefficient vector: free values plus the Dirichlet lift."""
        free_coeffs = np.asarray(free_coeffs, dtype=float)
        if free_coeffs.shape != (self.n_free,):
            raise InputError(f"expected {self.n_free} free coefficients, got {free_coeffs.shape}")
        full = self.dirichlet_values.copy()
        full[self.free_dofs] = free_coeffs
        return full


@dataclass(frozen=True)
class Prolongation:
    """Coarse total-DOF vectors to fine total-DOF vectors."""
    matrix: sparse.csr_matrix

    def __matmul__(self, other):
        return self.matrix @ other


def build_space(mesh: TriMesh, bc: BcSelector, dirichlet_data: Optional[ScalarField] = None) -> FeSpace:
    present = set(int(t) for t in np.unique(mesh.boundary_tags))
    unknown = set(bc.constrained_tags) - present
    if unknown:
        raise InputError(f"boundary tags {sorted(unknown)} do not occur in the mesh (present: {sorted(present)})")

    constrained = mesh.boundary_vertices(bc.constrained_tags)
    free = np.setdiff1d(np.arange(mesh.n_vertices), constrained)
    values = np.zeros(mesh.n_vertices)
    if dirichlet_data is not None and constrained.size:
        values[constrained] = dirichlet_data(mesh.points[constrained])
    for arr in (free, constrained, values):
        arr.setflags(write=False)
    return FeSpace(mesh, free, constrained, values)


def interpolate(target: Union[FeSpace, TriMesh], field: ScalarField) -> np.ndarray:
    """Nodal interpolant of `field` as a total-DOF vector."""
    mesh = target.mesh if isinstance(target, FeSpace) else target
    return np.asarray(field(mesh.points), dtype=float).reshape(mesh.n_vertices)


def _level_matrix(origin: np.ndarray, n_coarse: int) -> sparse.csr_matrix:
    n_fine = len(origin)
    rows = np.repeat(np.arange(n_fine), 2)
    # inherited vertices (a, a) sum to a single unit entry
    return sparse.coo_matrix(
        (np.full(2 * n_fine, 0.5), (rows, origin.ravel())), shape=(n_fine, n_coarse)
    ).tocsr()


def prolongate(values: np.ndarray, pm: ParentMap) -> np.ndarray:
    """Total-DOF vector of a P1 function carried through the refinement steps of `pm`."""
    values = np.asarray(values, dtype=float)
    if values.shape != (pm.n_coarse_vertices,):
        raise InputError(f"expected {pm.n_coarse_vertices} coarse values, got {values.shape}")
    for origin in pm.vertex_origins:
        values = 0.5 * (values[origin[:, 0]] + values[origin[:, 1]])
    return values


def build_prolongation(coarse: FeSpace, fine: FeSpace, pm: ParentMap) -> Prolongation:
    if pm.n_coarse_vertices != coarse.total_dofs or pm.n_coarse_triangles != coarse.mesh.n_triangles:
        raise InputError("parent map does not start from the coarse mesh")
    if len(pm.child_to_parent) != fine.mesh.n_triangles:
        raise InputError("parent map does not end at the fine mesh")

    matrix = sparse.identity(coarse.total_dofs, format="csr")
    for origin in pm.vertex_origins:
        if origin.size and origin.max() >= matrix.shape[0]:
            raise InputError("vertex origin refers to a vertex outside the coarser mesh")
        matrix = _level_matrix(origin, matrix.shape[0]) @ matrix
    if matrix.shape[0] != fine.total_dofs:
        raise InputError(f"prolongation has {matrix.shape[0]} rows, fine space has {fine.total_dofs} DOFs")
    return Prolongation(sparse.csr_matrix(matrix))


def locate(mesh: TriMesh, points: np.ndarray):
    """Containing triangle and barycentric coordinates for each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    coords = mesh.coordinates()
    origin = coords[:, 0]
    jac = np.stack([coords[:, 1] - origin, coords[:, 2] - origin], axis=2)
    jac_inv = np.linalg.inv(jac)

    tri_ids = np.empty(len(points), dtype=np.int64)
    bary = np.empty((len(points), 3))
    for start in range(0, len(points), LOCATE_CHUNK):
        chunk = points[start:start + LOCATE_CHUNK]
        local = np.einsum("tij,ntj->nti", jac_inv, chunk[:, None, :] - origin[None, :, :])
        lam = np.concatenate([1.0 - local.sum(axis=2, keepdims=True), local], axis=2)
        inside = np.all(lam >= -LOCATE_TOL, axis=2)
        found = inside.any(axis=1)
        if not np.all(found):
            bad = chunk[np.argmin(found)]
            raise InputError(f"point {tuple(bad)} lies outside the mesh")
        hit = np.argmax(inside, axis=1)
        tri_ids[start:start + len(chunk)] = hit
        bary[start:start + len(chunk)] = lam[np.arange(len(chunk)), hit]
    return tri_ids, bary


def evaluate(space: FeSpace, coeffs: np.ndarray, point) -> Union[float, np.ndarray]:
    """Value of the P1 function with total-DOF vector `coeffs` at one point or an (n, 2) array."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.total_dofs,):
        raise InputError(f"expected {space.total_dofs} coefficients, got {coeffs.shape}")
    point = np.asarray(point, dtype=float)
    tri_ids, bary = locate(space.mesh, point)
    values = np.einsum("ni,ni->n", bary, coeffs[space.mesh.triangles[tri_ids]])
    return float(values[0]) if point.ndim == 1 else values
