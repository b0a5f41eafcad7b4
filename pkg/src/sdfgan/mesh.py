"""Surface extraction from a distance field and mesh file output.

The zero level set is polygonized with marching cubes on a regular
grid spanning a centered cube; vertices come back in world coordinates.
Exports are plain ASCII OBJ and PLY with fixed formatting so the same
mesh always produces the same bytes.
"""

from __future__ import annotations

import numpy as np
from skimage import measure


def sample_grid(sdf_fn, resolution: int = 64, bound: float = 1.0,
                chunk: int = 32768) -> np.ndarray:
    """Evaluate the field on a regular (res, res, res) grid.

    Axis order is (x, y, z) with coordinates ascending from -bound to
    +bound along each axis.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis = np.linspace(-bound, bound, resolution)
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xs, ys, zs], axis=-1).reshape(-1, 3)
    out = np.empty(pts.shape[0], dtype=np.float64)
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = np.asarray(sdf_fn(pts[sl]), dtype=np.float64).reshape(-1)
    return out.reshape(resolution, resolution, resolution)


def extract_mesh(sdf_fn, resolution: int = 64, bound: float = 1.0,
                 level: float = 0.0):
    """Polygonize the level set; returns (vertices (V, 3), faces (F, 3)).

    An all-positive or all-negative grid yields empty arrays instead of
    raising. Vertices are mapped back to world coordinates.
    """
    volume = sample_grid(sdf_fn, resolution, bound)
    if volume.min() > level or volume.max() < level:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    spacing = 2.0 * bound / (resolution - 1)
    verts, faces, _, _ = measure.marching_cubes(
        volume, level=level, spacing=(spacing,) * 3, method="lorensen")
    verts = verts - bound
    faces = np.asarray(faces, dtype=np.int64)
    return verts, faces


def surface_normals(grad_fn, vertices: np.ndarray) -> np.ndarray:
    """Unit normals from the field gradient; zero rows where the
    gradient vanishes."""
    if vertices.shape[0] == 0:
        return np.zeros((0, 3))
    g = np.asarray(grad_fn(vertices), dtype=np.float64)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.divide(g, n, out=np.zeros_like(g), where=n > 1e-12)


def mesh_stats(vertices: np.ndarray, faces: np.ndarray) -> dict:
    """Counts plus watertightness indicators for a triangle mesh."""
    if faces.shape[0] == 0:
        return dict(n_vertices=int(vertices.shape[0]), n_faces=0, n_edges=0,
                    euler=0, boundary_edges=0, watertight=False)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    boundary = int((counts == 1).sum())
    v, f, ed = int(vertices.shape[0]), int(faces.shape[0]), int(uniq.shape[0])
    return dict(n_vertices=v, n_faces=f, n_edges=ed,
                euler=v - ed + f, boundary_edges=boundary,
                watertight=boundary == 0)


def save_obj(path, vertices: np.ndarray, faces: np.ndarray):
    """Write an ASCII OBJ file with one-based face indices."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for v in np.asarray(vertices, dtype=np.float64):
            fh.write(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
        for f in np.asarray(faces, dtype=np.int64):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_obj(path):
    """Read vertices and triangular faces back from an OBJ file."""
    verts, faces = [], []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:4]]
                faces.append(idx)
    return (np.asarray(verts, dtype=np.float64).reshape(-1, 3),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_ply(path, vertices: np.ndarray, faces: np.ndarray):
    """Write an ASCII PLY file."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {vertices.shape[0]}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {faces.shape[0]}\n")
        fh.write("property list uchar int vertex_indices\n")
        fh.write("end_header\n")
        for v in vertices:
            fh.write(f"{v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
        for f in faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
