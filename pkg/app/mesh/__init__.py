from .trimesh import (TriMesh,
                      ParentMap,
                      make_rect_mesh,
                      make_lshape_mesh,
                      uniform_refine,
                      bisect,
                      compose,
                      identity_parent_map)
from .svg import (mesh_to_svg,
                  write_svg)

__all__ = [
    'TriMesh',
    'ParentMap',
    'make_rect_mesh',
    'make_lshape_mesh',
    'uniform_refine',
    'bisect',
    'compose',
    'identity_parent_map',
    'mesh_to_svg',
    'write_svg'
]
