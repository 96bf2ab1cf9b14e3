"""Triangle meshes built from deformed surface grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError
from .synth import SurfaceSequence


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices, faces, per-vertex unit normals and parameter coordinates."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray     # (F, 3) int64, counter-clockwise in parameter space
    normals: np.ndarray   # (V, 3), unit length
    uv: np.ndarray        # (V, 2), parameter-domain coordinates in [-1, 1]

    def __post_init__(self):
        v, f, n, uv = self.vertices, self.faces, self.normals, self.uv
        if v.ndim != 2 or v.shape[1] != 3:
            raise SizeError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise SizeError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise SizeError("face indices out of bounds")
        if n.shape != v.shape:
            raise SizeError(f"normals must match vertices, got {n.shape}")
        if uv.shape != (len(v), 2):
            raise SizeError(f"uv must be (V, 2), got {uv.shape}")
        lengths = np.linalg.norm(n, axis=1)
        if n.size and np.abs(lengths - 1.0).max() > 1e-9:
            raise SizeError("normals must be unit length")


def _grid_faces(n: int) -> np.ndarray:
    """Two triangles per cell of an n x n vertex grid, vectorized."""
    idx = np.arange(n * n).reshape(n, n)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    tri1 = np.stack([a, b, c], axis=1)
    tri2 = np.stack([c, b, d], axis=1)
    return np.concatenate([tri1, tri2]).astype(np.int64)


def _vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals: sum unnormalized face cross products.

    Degenerate faces contribute zero weight automatically; isolated vertices
    with no usable normal fall back to +z.
    """
    p0 = vertices[faces[:, 0]]
    p1 = vertices[faces[:, 1]]
    p2 = vertices[faces[:, 2]]
    fn = np.cross(p1 - p0, p2 - p0)
    out = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    lengths = np.linalg.norm(out, axis=1)
    bad = lengths < 1e-300
    out[bad] = (0.0, 0.0, 1.0)
    lengths[bad] = 1.0
    return out / lengths[:, None]


def mesh_from_surface(surface: SurfaceSequence, frame: int) -> TriangleMesh:
    """The surface's triangle mesh at one frame."""
    if not 0 <= frame < surface.frames:
        raise SizeError(f"frame {frame} out of range [0, {surface.frames})")
    n = surface.grid_n
    verts = surface.vertices[frame].reshape(-1, 3)
    faces = _grid_faces(n)
    return TriangleMesh(
        vertices=verts,
        faces=faces,
        normals=_vertex_normals(verts, faces),
        uv=surface.param_coords.reshape(-1, 2),
    )
