import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.mesh.trimesh import TriMesh

logger = logging.getLogger(__name__)


def mesh_to_svg(mesh: TriMesh) -> str:
    """One polygon per triangle; the second coordinate points up in the picture."""
    lo, hi = mesh.bounding_box()
    width, height = hi - lo
    stroke = 0.002 * float(np.hypot(width, height))
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{lo[0]:.6g} {-hi[1]:.6g} {width:.6g} {height:.6g}">',
        f'<g fill="none" stroke="black" stroke-width="{stroke:.6g}" stroke-linejoin="round">',
    ]
    for tri in mesh.coordinates():
        pts = " ".join(f"{x:.9g},{-y:.9g}" for x, y in tri)
        lines.append(f'<polygon points="{pts}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


def write_svg(mesh: TriMesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mesh_to_svg(mesh))
    logger.debug(f"Wrote mesh with {mesh.n_triangles} triangles to {path}")
    return path
