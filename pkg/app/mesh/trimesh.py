"""
Conforming triangle meshes of 2D (space or space-time) domains.

Triangles are stored as counterclockwise vertex triples whose first vertex is
the newest vertex, so the refinement edge is always the local edge (1, 2).
Meshes are immutable; every refinement returns a new mesh together with a
ParentMap relating it to its input.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from app.models.schemas import BoundaryTag
from app.utils.exceptions import InputError

logger = logging.getLogger(__name__)

# local edge k is opposite local vertex k
LOCAL_EDGES = np.array([(1, 2), (2, 0), (0, 1)])


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TriMesh:
    points: np.ndarray                 # (N, 2) vertex coordinates
    triangles: np.ndarray              # (T, 3) newest vertex first, counterclockwise
    boundary_edges: np.ndarray         # (E_b, 2) vertex pairs
    boundary_tags: np.ndarray          # (E_b,) BoundaryTag values
    generation: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", _frozen(self.boundary_tags, np.int64))
        if not np.all(np.isfinite(self.points)):
            raise InputError("mesh vertex coordinates must be finite")

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def coordinates(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (T, 3, 2)."""
        return self.points[self.triangles]

    def signed_areas(self) -> np.ndarray:
        c = self.coordinates()
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def centroids(self) -> np.ndarray:
        return self.coordinates().mean(axis=1)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges (E, 2) and the triangle-to-edge map (T, 3)."""
        local = self.triangles[:, LOCAL_EDGES].reshape(-1, 2)
        edges, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    def is_conforming(self) -> bool:
        """Every edge is used by one (boundary) or two (interior) triangles."""
        edges, tri_edges = self.edges()
        counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
        if np.any(counts > 2) or np.any(counts < 1):
            return False
        on_boundary = edges[counts == 1]
        declared = np.sort(self.boundary_edges, axis=1)
        if len(on_boundary) != len(declared):
            return False
        return bool(np.all(_sorted_rows(on_boundary) == _sorted_rows(declared)))

    def angles(self) -> np.ndarray:
        """Interior angles per triangle, shape (T, 3), in radians."""
        c = self.coordinates()
        result = np.empty((self.n_triangles, 3))
        for k in range(3):
            a = c[:, (k + 1) % 3] - c[:, k]
            b = c[:, (k + 2) % 3] - c[:, k]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            result[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
        return result

    def min_angle(self) -> float:
        return float(self.angles().min())

    def boundary_vertices(self, tags) -> np.ndarray:
        """Sorted ids of vertices lying on boundary edges carrying any of `tags`."""
        mask = np.isin(self.boundary_tags, list(tags))
        return np.unique(self.boundary_edges[mask])

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class ParentMap:
    """
    Relation between a refined mesh and the coarse mesh it was derived from.

    `child_to_parent[i]` is the coarse triangle containing fine triangle i.
    `vertex_origins` holds one (N_k, 2) array per refinement step, oldest
    first: row (a, a) marks an inherited vertex a, row (a, b) the midpoint of
    edge (a, b) of the mesh one step coarser.
    """
    child_to_parent: np.ndarray
    vertex_origins: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    n_coarse_triangles: int = 0
    n_coarse_vertices: int = 0

    @property
    def vertex_origin(self) -> np.ndarray:
        if len(self.vertex_origins) != 1:
            raise InputError("vertex_origin is only defined for a single refinement step")
        return self.vertex_origins[0]

    @property
    def n_steps(self) -> int:
        return len(self.vertex_origins)


def identity_parent_map(mesh: TriMesh) -> ParentMap:
    return ParentMap(
        child_to_parent=np.arange(mesh.n_triangles),
        vertex_origins=(),
        n_coarse_triangles=mesh.n_triangles,
        n_coarse_vertices=mesh.n_vertices,
    )


def compose(first: ParentMap, second: ParentMap) -> ParentMap:
    """ParentMap of mesh0 -> mesh2 given mesh0 -> mesh1 and mesh1 -> mesh2."""
    return ParentMap(
        child_to_parent=first.child_to_parent[second.child_to_parent],
        vertex_origins=first.vertex_origins + second.vertex_origins,
        n_coarse_triangles=first.n_coarse_triangles,
        n_coarse_vertices=first.n_coarse_vertices,
    )


def _sorted_rows(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows).reshape(-1, 2)
    return rows[np.lexsort((rows[:, 1], rows[:, 0]))]


def _orient(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Make triangles counterclockwise with the vertex opposite the longest edge first."""
    triangles = np.array(triangles, dtype=np.int64)
    c = points[triangles]
    d1 = c[:, 1] - c[:, 0]
    d2 = c[:, 2] - c[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(np.abs(signed) <= 1e-14 * max(1.0, np.abs(signed).max(initial=0.0))):
        raise InputError("degenerate triangle in mesh construction")
    clockwise = signed < 0
    triangles[clockwise] = triangles[clockwise][:, [0, 2, 1]]

    c = points[triangles]
    lengths = np.stack([
        np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
        np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
        np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
    ], axis=1)
    longest = np.argmax(lengths, axis=1)
    rows = np.arange(len(triangles))[:, None]
    order = (longest[:, None] + np.arange(3)[None, :]) % 3
    return triangles[rows, order]


def _boundary_from_triangles(mesh_triangles: np.ndarray) -> np.ndarray:
    local = mesh_triangles[:, LOCAL_EDGES].reshape(-1, 2)
    edges, counts = np.unique(np.sort(local, axis=1), axis=0, return_counts=True)
    return edges[counts == 1]


def _grid_mesh(
    xs: np.ndarray,
    ys: np.ndarray,
    keep_cell: Callable[[float, float], bool],
    tag_edge: Callable[[np.ndarray, np.ndarray], int],
) -> TriMesh:
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    points = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            if not keep_cell(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])):
                continue
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    triangles = np.array(triangles, dtype=np.int64)

    used = np.unique(triangles)
    renumber = -np.ones(len(points), dtype=np.int64)
    renumber[used] = np.arange(len(used))
    points = points[used]
    triangles = _orient(points, renumber[triangles])

    boundary = _boundary_from_triangles(triangles)
    tags = np.array([tag_edge(points[a], points[b]) for a, b in boundary], dtype=np.int64)
    return TriMesh(points, triangles, boundary, tags)


def make_rect_mesh(x_range, y_range, nx: int, ny: int) -> TriMesh:
    """Structured mesh of a rectangle, cells split along the lower-left to upper-right diagonal."""
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x1 > x0 and y1 > y0):
        raise InputError(f"degenerate interval: x_range={x_range}, y_range={y_range}")
    if nx < 1 or ny < 1:
        raise InputError(f"grid counts must be positive, got nx={nx}, ny={ny}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)

    def side(a, b):
        mid = 0.5 * (a + b)
        if np.isclose(a[1], y0) and np.isclose(b[1], y0):
            return BoundaryTag.BOTTOM
        if np.isclose(a[1], y1) and np.isclose(b[1], y1):
            return BoundaryTag.TOP
        if np.isclose(mid[0], x0):
            return BoundaryTag.LEFT
        return BoundaryTag.RIGHT

    return _grid_mesh(xs, ys, lambda x, y: True, side)


def make_lshape_mesh(n: int = 1) -> TriMesh:
    """Mesh of (-1,1)^2 minus [0,1]x[-1,0], n cells per unit length, all boundary Dirichlet."""
    if n < 1:
        raise InputError(f"cells per unit must be positive, got {n}")
    ticks = np.linspace(-1.0, 1.0, 2 * n + 1)
    return _grid_mesh(
        ticks,
        ticks,
        lambda x, y: not (x > 0 and y < 0),
        lambda a, b: BoundaryTag.DIRICHLET,
    )


def _split_boundary(mesh: TriMesh, midpoint_of: Callable[[np.ndarray], np.ndarray]):
    """Replace every bisected boundary edge by its two halves, keeping the tag."""
    mids = midpoint_of(mesh.boundary_edges)
    split = mids >= 0
    kept = mesh.boundary_edges[~split]
    a, b = mesh.boundary_edges[split, 0], mesh.boundary_edges[split, 1]
    halves = np.concatenate([np.column_stack([a, mids[split]]), np.column_stack([mids[split], b])])
    edges = np.concatenate([kept, halves])
    tags = np.concatenate([
        mesh.boundary_tags[~split],
        mesh.boundary_tags[split],
        mesh.boundary_tags[split],
    ])
    return edges, tags


def _edge_lookup(edges: np.ndarray, edge_to_node: np.ndarray, n_vertices: int):
    keys = edges[:, 0] * n_vertices + edges[:, 1]
    order = np.argsort(keys)
    keys = keys[order]

    def midpoint_of(pairs: np.ndarray) -> np.ndarray:
        pairs = np.sort(np.asarray(pairs).reshape(-1, 2), axis=1)
        query = pairs[:, 0] * n_vertices + pairs[:, 1]
        pos = np.searchsorted(keys, query)
        return edge_to_node[order[pos]]

    return midpoint_of


def uniform_refine(mesh: TriMesh) -> Tuple[TriMesh, ParentMap]:
    """Red refinement: every triangle is replaced by its four midpoint children."""
    n = mesh.n_vertices
    n_tri = mesh.n_triangles
    edges, tri_edges = mesh.edges()
    edge_to_node = np.arange(n, n + len(edges))
    points = np.concatenate([mesh.points, 0.5 * (mesh.points[edges[:, 0]] + mesh.points[edges[:, 1]])])

    p0, p1, p2 = mesh.triangles.T
    m12, m20, m01 = (edge_to_node[tri_edges[:, k]] for k in range(3))
    triangles = np.concatenate([
        np.column_stack([p0, m01, m20]),
        np.column_stack([m01, p1, m12]),
        np.column_stack([m20, m12, p2]),
        np.column_stack([m12, m20, m01]),
    ])
    parents = np.tile(np.arange(n_tri), 4)

    boundary, tags = _split_boundary(mesh, _edge_lookup(edges, edge_to_node, n))
    origin = np.concatenate([np.column_stack([np.arange(n), np.arange(n)]), edges])
    fine = TriMesh(points, triangles, boundary, tags, generation=mesh.generation + 1)
    pm = ParentMap(parents, (origin,), n_tri, n)
    return fine, pm


def bisect(mesh: TriMesh, marked) -> Tuple[TriMesh, ParentMap]:
    """
    Newest vertex bisection of the marked triangles with conforming closure.

    Each triangle is cut at most twice in one call: first across its
    refinement edge, then each child across its own refinement edge if that
    edge was cut as well. All new vertices are midpoints of edges of `mesh`.
    """
    marked = np.unique(np.fromiter(marked, dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise InputError("marked triangle ids out of range")
    if marked.size == 0:
        return mesh, identity_parent_map(mesh)

    n = mesh.n_vertices
    n_tri = mesh.n_triangles
    edges, tri_edges = mesh.edges()

    # neighbor across each local edge; boundary edges point back to the triangle itself
    flat = tri_edges.ravel()
    order = np.argsort(flat, kind="stable")
    ids = np.arange(len(edges))
    first = order[np.searchsorted(flat[order], ids)] // 3
    second = order[np.searchsorted(flat[order], ids, side="right") - 1] // 3
    tri_ids = np.repeat(np.arange(n_tri), 3).reshape(-1, 3)
    neighbor = np.where(first[tri_edges] == tri_ids, second[tri_edges], first[tri_edges])

    cut = np.zeros(len(edges), dtype=bool)
    pending = marked
    rounds = 0
    while pending.size:
        cut[tri_edges[pending, 0]] = True
        across = neighbor[pending, 0]
        pending = np.unique(across[~cut[tri_edges[across, 0]]])
        rounds += 1
    logger.debug(f"bisection closure: {rounds} rounds, {int(cut.sum())} edges cut")

    edge_to_node = np.full(len(edges), -1, dtype=np.int64)
    edge_to_node[cut] = np.arange(n, n + int(cut.sum()))
    points = np.concatenate([mesh.points, 0.5 * (mesh.points[edges[cut, 0]] + mesh.points[edges[cut, 1]])])

    triangles = mesh.triangles.copy()
    parents = np.arange(n_tri)

    # first cut: every triangle whose refinement edge is cut
    split = np.nonzero(cut[tri_edges[:, 0]])[0]
    p0, p1, p2 = triangles[split].T
    p3 = edge_to_node[tri_edges[split, 0]]
    triangles[split] = np.column_stack([p3, p0, p1])
    triangles = np.concatenate([triangles, np.column_stack([p3, p2, p0])])
    parents = np.concatenate([parents, parents[split]])
    # the children's refinement edges are the remaining edges of the parent
    ref_edge = np.concatenate([tri_edges[:, 0], tri_edges[split, 1]])
    ref_edge[split] = tri_edges[split, 2]
    bisected = np.zeros(len(triangles), dtype=bool)
    bisected[split] = True
    bisected[n_tri:] = True

    # second cut: children whose refinement edge is cut too
    split = np.nonzero(bisected & cut[ref_edge])[0]
    p0, p1, p2 = triangles[split].T
    p3 = edge_to_node[ref_edge[split]]
    triangles[split] = np.column_stack([p3, p0, p1])
    triangles = np.concatenate([triangles, np.column_stack([p3, p2, p0])])
    parents = np.concatenate([parents, parents[split]])

    boundary, tags = _split_boundary(mesh, _edge_lookup(edges, edge_to_node, n))
    origin = np.concatenate([np.column_stack([np.arange(n), np.arange(n)]), edges[cut]])
    fine = TriMesh(points, triangles, boundary, tags, generation=mesh.generation + 1)
    return fine, ParentMap(parents, (origin,), n_tri, n)

