"""Orthographic rendering of surface meshes: shaded frames and depth maps.

The camera looks along -z at the window (-1, 1)^2; one ray passes through
each pixel center (see core for the pixel mapping).  For such rays the
ray-triangle test reduces to a barycentric point-in-triangle test of the
triangle's xy projection, with the hit depth interpolated from vertex z
values; the nearest hit is the one with the largest z.  Pixels that hit
nothing take the background plane z = 0 as their depth, with the true hit
set reported in a separate mask.

Shading is Phong: with unit normal n, unit light direction l, view
direction v = (0, 0, 1) and reflection r = 2 (n.l) n - l,

    I_c = tex_c * (ambient * k_a + L_c * k_d * max(0, n.l))
        + L_c * k_s * max(0, r.v)^shininess

clamped to [0, 1] after optional additive Gaussian pixel noise.  Since both
lighting and camera are directional, the image is invariant to translating
the scene along the viewing axis while the depth map shifts by the same
amount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import GenerationConfig, LightRanges, MaterialRanges
from .core import VideoTensor
from .errors import ConfigError, SizeError
from .mesh import TriangleMesh, mesh_from_surface
from .synth import (
    DeformationParams,
    EuclideanTrajectory,
    PhaseField,
    sample_phase_field,
    sample_trajectory,
)
from .textures import TEXTURE_SIZE, Texture

_DEGENERATE_AREA = 1e-15
_EDGE_SLACK = 1e-12
BACKGROUND_DEPTH = 0.0


@dataclass(frozen=True)
class Material:
    """Texture plus Phong coefficients."""

    texture: Texture
    ambient: float
    diffuse: float
    specular: float
    shininess: float

    def __post_init__(self):
        for name in ("ambient", "diffuse", "specular"):
            v = getattr(self, name)
            if not 0.0 <= v or not math.isfinite(v):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.shininess < 1.0:
            raise ConfigError(f"shininess must be >= 1, got {self.shininess}")


@dataclass(frozen=True)
class LightRig:
    """One directional light plus an ambient term."""

    direction: np.ndarray  # unit vector pointing from the surface toward the light
    intensity: np.ndarray  # per-RGB-channel intensity
    ambient: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        i = np.asarray(self.intensity, dtype=np.float64)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ConfigError("light direction must be a unit 3-vector")
        if i.shape != (3,) or (i < 0).any():
            raise ConfigError("light intensity must be 3 non-negative values")
        if self.ambient < 0:
            raise ConfigError(f"ambient intensity must be >= 0, got {self.ambient}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "intensity", i)


@dataclass(frozen=True)
class HitBuffer:
    """Per-pixel intersection record for one frame."""

    depth: np.ndarray  # (H, W) z of the nearest hit; background where no hit
    hit: np.ndarray    # (H, W) bool
    face: np.ndarray   # (H, W) winning face index (0 where no hit)
    bary_u: np.ndarray
    bary_v: np.ndarray


def rasterize(mesh: TriangleMesh, width: int, height: int) -> HitBuffer:
    """Cast one orthographic ray per pixel center and keep the nearest hit.

    Triangles whose projected area is below 1e-15 are skipped; rays can only
    graze them.  Work is linear in the summed pixel-bounding-box area of the
    projected triangles.
    """
    if width < 1 or height < 1:
        raise SizeError(f"resolution must be positive, got {width}x{height}")
    depth = np.full((height, width), BACKGROUND_DEPTH, dtype=np.float64)
    hit = np.zeros((height, width), dtype=bool)
    face = np.zeros((height, width), dtype=np.int64)
    bu = np.zeros((height, width), dtype=np.float64)
    bv = np.zeros((height, width), dtype=np.float64)
    if len(mesh.faces) == 0:
        return HitBuffer(depth, hit, face, bu, bv)

    tri = mesh.vertices[mesh.faces]              # (F, 3, 3)
    # Continuous pixel coordinates: pixel j covers [j - 0.5, j + 0.5] around
    # its center; world x = -1 + (j + 0.5) * hx.
    hx, hy = 2.0 / width, 2.0 / height
    px = (tri[:, :, 0] + 1.0) / hx - 0.5          # (F, 3) in pixel units
    py = (tri[:, :, 1] + 1.0) / hy - 0.5
    pz = tri[:, :, 2]

    v0x = px[:, 1] - px[:, 0]
    v0y = py[:, 1] - py[:, 0]
    v1x = px[:, 2] - px[:, 0]
    v1y = py[:, 2] - py[:, 0]
    denom = v0x * v1y - v1x * v0y
    # Projected area in world units = 0.5 |denom| * hx * hy.
    keep = np.abs(denom) * 0.5 * hx * hy >= _DEGENERATE_AREA
    if not keep.any():
        return HitBuffer(depth, hit, face, bu, bv)
    keep_idx = np.nonzero(keep)[0]
    px, py, pz = px[keep], py[keep], pz[keep]
    v0x, v0y, v1x, v1y, denom = v0x[keep], v0y[keep], v1x[keep], v1y[keep], denom[keep]

    c0 = np.clip(np.ceil(px.min(axis=1)).astype(np.int64), 0, width)
    c1 = np.clip(np.floor(px.max(axis=1)).astype(np.int64) + 1, 0, width)
    r0 = np.clip(np.ceil(py.min(axis=1)).astype(np.int64), 0, height)
    r1 = np.clip(np.floor(py.max(axis=1)).astype(np.int64) + 1, 0, height)
    w = np.maximum(c1 - c0, 0)
    h = np.maximum(r1 - r0, 0)
    areas = w * h
    total = int(areas.sum())
    if total == 0:
        return HitBuffer(depth, hit, face, bu, bv)

    t_of_pair = np.repeat(np.arange(len(areas)), areas)
    starts = np.concatenate([[0], np.cumsum(areas)[:-1]])
    offset = np.arange(total) - np.repeat(starts, areas)
    ww = w[t_of_pair]
    lrow = offset // np.maximum(ww, 1)
    lcol = offset - lrow * ww
    rows = r0[t_of_pair] + lrow
    cols = c0[t_of_pair] + lcol

    # Barycentric coordinates of each candidate pixel center.
    qx = cols - px[t_of_pair, 0]
    qy = rows - py[t_of_pair, 0]
    d = denom[t_of_pair]
    u = (qx * v1y[t_of_pair] - v1x[t_of_pair] * qy) / d
    v = (v0x[t_of_pair] * qy - qx * v0y[t_of_pair]) / d
    inside = (u >= -_EDGE_SLACK) & (v >= -_EDGE_SLACK) & (u + v <= 1.0 + _EDGE_SLACK)
    if not inside.any():
        return HitBuffer(depth, hit, face, bu, bv)

    t_of_pair = t_of_pair[inside]
    rows, cols, u, v = rows[inside], cols[inside], u[inside], v[inside]
    z0 = pz[t_of_pair, 0]
    # difference form: exact (z == z0) on triangles of constant depth
    z = z0 + u * (pz[t_of_pair, 1] - z0) + v * (pz[t_of_pair, 2] - z0)

    flat = rows * width + cols
    order = np.lexsort((z, flat))  # per pixel, the largest z comes last
    flat_sorted = flat[order]
    last = np.nonzero(np.diff(np.append(flat_sorted, -1)))[0]
    win = order[last]
    rows_w, cols_w = rows[win], cols[win]
    hit[rows_w, cols_w] = True
    depth[rows_w, cols_w] = z[win]
    face[rows_w, cols_w] = keep_idx[t_of_pair[win]]
    bu[rows_w, cols_w] = u[win]
    bv[rows_w, cols_w] = v[win]
    return HitBuffer(depth, hit, face, bu, bv)


def raycast_depth(mesh: TriangleMesh, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Depth frame (background-filled) and hit mask for one mesh."""
    buf = rasterize(mesh, width, height)
    return buf.depth, buf.hit


def _sample_texture(texture: Texture, uv: np.ndarray) -> np.ndarray:
    """Bilinear texture lookup at parameter-domain points, shape (N, 2) -> (N, 3)."""
    t = (uv + 1.0) * 0.5 * (TEXTURE_SIZE - 1)
    t = np.clip(t, 0.0, TEXTURE_SIZE - 1)
    x, y = t[:, 0], t[:, 1]
    x0 = np.clip(np.floor(x).astype(np.int64), 0, TEXTURE_SIZE - 1)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, TEXTURE_SIZE - 1)
    x1 = np.minimum(x0 + 1, TEXTURE_SIZE - 1)
    y1 = np.minimum(y0 + 1, TEXTURE_SIZE - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    img = texture.data
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def shade_hits(buf: HitBuffer, mesh: TriangleMesh, material: Material,
               light: LightRig) -> np.ndarray:
    """Phong-shade the hit pixels of a rasterized frame; misses stay black."""
    height, width = buf.depth.shape
    out = np.zeros((height, width, 3), dtype=np.float64)
    idx = np.nonzero(buf.hit)
    if idx[0].size == 0:
        return out
    faces = mesh.faces[buf.face[idx]]
    u = buf.bary_u[idx][:, None]
    v = buf.bary_v[idx][:, None]
    w0 = 1.0 - u - v
    n = w0 * mesh.normals[faces[:, 0]] + u * mesh.normals[faces[:, 1]] + v * mesh.normals[faces[:, 2]]
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(lengths > 0, lengths, 1.0)
    uv = w0 * mesh.uv[faces[:, 0]] + u * mesh.uv[faces[:, 1]] + v * mesh.uv[faces[:, 2]]
    tex = _sample_texture(material.texture, uv)

    l = light.direction
    ndotl = np.clip(n @ l, 0.0, None)[:, None]
    r = 2.0 * (n @ l)[:, None] * n - l[None, :]
    rz = np.clip(r[:, 2], 0.0, None)[:, None]  # r . v with v = (0, 0, 1)
    color = tex * (material.ambient * light.ambient
                   + material.diffuse * light.intensity[None, :] * ndotl) \
        + material.specular * light.intensity[None, :] * np.power(rz, material.shininess)
    out[idx] = color
    return out


def shade_frame(mesh: TriangleMesh, material: Material, light: LightRig,
                width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Shaded RGB frame (unclamped, noise-free) and its hit mask."""
    buf = rasterize(mesh, width, height)
    return shade_hits(buf, mesh, material, light), buf.hit


# ---------------------------------------------------------------------------
# Clip assembly.

@dataclass(frozen=True)
class ClipMeta:
    """Reproducibility record for one clip."""

    seed: int
    params: dict

    def digest(self) -> bytes:
        """64-byte digest: little-endian seed then sha512(params JSON)[:56]."""
        import hashlib
        import json

        payload = json.dumps(self.params, sort_keys=True, separators=(",", ":")).encode()
        return self.seed.to_bytes(8, "little") + hashlib.sha512(payload).digest()[:56]


@dataclass(frozen=True)
class ClipSample:
    """A rendered clip: shaded video, depth video, hit mask, metadata."""

    render: VideoTensor   # (T, H, W, 3)
    depth: VideoTensor    # (T, H, W, 1)
    hit: np.ndarray       # (T, H, W) bool
    meta: ClipMeta

    def __post_init__(self):
        if self.render.channels != 3:
            raise SizeError(f"render must have 3 channels, got {self.render.channels}")
        if self.depth.channels != 1:
            raise SizeError(f"depth must have 1 channel, got {self.depth.channels}")
        r, d = self.render, self.depth
        if (r.frames, r.height, r.width) != (d.frames, d.height, d.width):
            raise SizeError("render and depth dims disagree")
        if self.hit.shape != (d.frames, d.height, d.width):
            raise SizeError(f"hit mask shape {self.hit.shape} does not match depth")


def _f32_exact(arr: np.ndarray) -> np.ndarray:
    """Round to float32 precision but keep float64 dtype.

    Clip data is stored on disk as float32; quantizing here makes the
    in-memory sample identical to what a write/read round trip returns.
    """
    return arr.astype(np.float32).astype(np.float64)


def sample_material(rng: np.random.Generator, ranges: MaterialRanges, texture: Texture) -> Material:
    ranges.validate()
    return Material(
        texture=texture,
        ambient=rng.uniform(*ranges.ambient),
        diffuse=rng.uniform(*ranges.diffuse),
        specular=rng.uniform(*ranges.specular),
        shininess=rng.uniform(*ranges.shininess),
    )


def sample_light(rng: np.random.Generator, ranges: LightRanges) -> LightRig:
    ranges.validate()
    polar = rng.uniform(*ranges.polar)
    azimuth = rng.uniform(*ranges.azimuth)
    direction = np.array([
        math.sin(polar) * math.cos(azimuth),
        math.sin(polar) * math.sin(azimuth),
        math.cos(polar),
    ])
    direction /= np.linalg.norm(direction)
    return LightRig(
        direction=direction,
        intensity=rng.uniform(*ranges.intensity, size=3),
        ambient=rng.uniform(*ranges.ambient),
    )


def make_clip(params: DeformationParams, material: Material, light: LightRig,
              noise_sigma: float, rng: np.random.Generator, *,
              width: int = 64, height: int = 64,
              phase: PhaseField | None = None,
              trajectory: EuclideanTrajectory | None = None,
              traj_ranges=None, seed: int = 0,
              extra_meta: dict | None = None) -> ClipSample:
    """Synthesize, pose, and render one clip.

    Phase field and trajectory are drawn from ``rng`` when not supplied.
    The rasterization is shared between the shaded frame and the depth
    frame, so their hit sets agree pixel for pixel by construction.
    """
    from .config import TrajectoryRanges
    from .synth import build_surface

    if noise_sigma < 0 or not math.isfinite(noise_sigma):
        raise ConfigError(f"noise_sigma must be finite and >= 0, got {noise_sigma}")
    if phase is None:
        phase = sample_phase_field(params, rng)
    if trajectory is None:
        trajectory = sample_trajectory(rng, traj_ranges or TrajectoryRanges(), params.frames)
    surface = build_surface(params, phase, trajectory)

    frames = params.frames
    render = np.zeros((frames, height, width, 3))
    depth = np.zeros((frames, height, width, 1))
    hit = np.zeros((frames, height, width), dtype=bool)
    for t in range(frames):
        m = mesh_from_surface(surface, t)
        buf = rasterize(m, width, height)
        render[t] = shade_hits(buf, m, material, light)
        depth[t, :, :, 0] = buf.depth
        hit[t] = buf.hit
    if noise_sigma > 0:
        render = render + rng.normal(0.0, noise_sigma, size=render.shape)
    render = np.clip(render, 0.0, 1.0)

    meta_params = {
        "deform": params.to_dict(),
        "material": {
            "ambient": material.ambient, "diffuse": material.diffuse,
            "specular": material.specular, "shininess": material.shininess,
            "texture_source": material.texture.source,
            "texture_origin": list(material.texture.origin),
        },
        "light": {
            "direction": light.direction.tolist(),
            "intensity": light.intensity.tolist(),
            "ambient": light.ambient,
        },
        "noise_sigma": noise_sigma,
        "render_size": [width, height],
    }
    if extra_meta:
        meta_params.update(extra_meta)
    return ClipSample(
        render=VideoTensor(_f32_exact(render)),
        depth=VideoTensor(_f32_exact(depth)),
        hit=hit,
        meta=ClipMeta(seed=seed, params=meta_params),
    )
