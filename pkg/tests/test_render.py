"""Ray-cast renderer oracles: exact depths, closed-form shading, ambiguity witness."""

import math

import numpy as np
import pytest
from PIL import Image

from nrdk.config import (GenerationConfig, LightRanges, MaterialRanges,
                         TrajectoryRanges)
from nrdk.errors import ConfigError, SizeError
from nrdk.invariants import pixel_grid
from nrdk.mesh import TriangleMesh, mesh_from_surface
from nrdk.render import (BACKGROUND_DEPTH, ClipMeta, LightRig, Material,
                         make_clip, rasterize, raycast_depth, sample_light,
                         sample_material, shade_frame, shade_hits)
from nrdk.synth import DeformationParams, sample_phase_field, sample_trajectory
from nrdk.textures import TEXTURE_SIZE, DirectoryTextures, ProceduralTextures, Texture


def rng():
    return np.random.default_rng(20240820)


def square_mesh(z_fn, half=1.5):
    """Two triangles spanning [-half, half]^2 with z from a callable."""
    xy = np.array([(-half, -half), (half, -half), (-half, half), (half, half)])
    verts = np.array([(x, y, z_fn(x, y)) for x, y in xy])
    faces = np.array([[0, 1, 2], [2, 1, 3]], dtype=np.int64)
    e1 = verts[1] - verts[0]
    e2 = verts[2] - verts[0]
    n = np.cross(e1, e2)
    n /= np.linalg.norm(n)
    normals = np.repeat(n[None], 4, axis=0)
    return TriangleMesh(vertices=verts, faces=faces, normals=normals, uv=xy / half)


def solid_texture(color):
    data = np.tile(np.asarray(color, dtype=np.float64), (TEXTURE_SIZE, TEXTURE_SIZE, 1))
    return Texture(data=data, origin=(0, 0), source="solid")


def default_params(frames=2, grid_n=17):
    return DeformationParams(
        grid_n=grid_n, frames=frames, kappa=0.2, nu=0.8, zeta=0.6, xi=0.02,
        sigma=((0.02, 0.0), (0.0, 0.02)), w_r0=2.0, w_p=3.0,
        phase_speed_scale=2.0,
    )


# ---------------------------------------------------------------------------
# Depth oracles.

def test_flat_patch_constant_depth_exact():
    for c in (0.0, 0.5, 1.0, -0.25, 0.1234567891234):
        mesh = square_mesh(lambda x, y: c)
        depth, hit = raycast_depth(mesh, 33, 17)
        assert hit.all()
        assert (depth == c).all()  # bit-exact, not approximately


def test_tilted_plane_linear_ramp():
    a, b, c = 0.3, -0.2, 1.0
    mesh = square_mesh(lambda x, y: a * x + b * y + c)
    depth, hit = raycast_depth(mesh, 32, 32)
    x, y = pixel_grid(32, 32)
    assert hit.all()
    assert np.abs(depth - (a * x + b * y + c)).max() <= 1e-9


def test_partial_coverage_background_depth():
    mesh = square_mesh(lambda x, y: 0.7, half=0.5)
    depth, hit = raycast_depth(mesh, 64, 64)
    assert hit.any() and not hit.all()
    assert (depth[~hit] == BACKGROUND_DEPTH).all()
    assert (depth[hit] == 0.7).all()


def test_nearer_of_two_stacked_planes_wins():
    # camera looks along -z, so the larger z is nearer
    far = square_mesh(lambda x, y: 0.5)
    near = square_mesh(lambda x, y: 1.0)
    verts = np.concatenate([far.vertices, near.vertices])
    faces = np.concatenate([far.faces, near.faces + 4])
    normals = np.concatenate([far.normals, near.normals])
    uv = np.concatenate([far.uv, near.uv])
    both = TriangleMesh(vertices=verts, faces=faces, normals=normals, uv=uv)
    buf = rasterize(both, 16, 16)
    assert buf.hit.all()
    assert (buf.depth == 1.0).all()
    assert (buf.face >= 2).all()  # faces 2, 3 belong to the nearer square


def test_degenerate_sliver_skipped():
    verts = np.array([(-1.0, 0.0, 0.5), (0.0, 0.0, 0.5), (1.0, 0.0, 0.5)])
    faces = np.array([[0, 1, 2]], dtype=np.int64)
    normals = np.tile((0.0, 0.0, 1.0), (3, 1))
    uv = verts[:, :2]
    sliver = TriangleMesh(vertices=verts, faces=faces, normals=normals, uv=uv)
    depth, hit = raycast_depth(sliver, 16, 16)
    assert not hit.any()
    assert (depth == BACKGROUND_DEPTH).all()


def test_empty_mesh_and_bad_resolution():
    empty = TriangleMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64),
                         normals=np.zeros((0, 3)), uv=np.zeros((0, 2)))
    depth, hit = raycast_depth(empty, 8, 8)
    assert not hit.any()
    with pytest.raises(SizeError):
        rasterize(empty, 0, 8)


# ---------------------------------------------------------------------------
# Shading oracles.

def test_lambertian_flat_closed_form():
    mesh = square_mesh(lambda x, y: 0.3)
    tex = solid_texture((0.5, 0.25, 0.75))
    mat = Material(texture=tex, ambient=0.3, diffuse=0.6, specular=0.0, shininess=10.0)
    direction = np.array([math.sin(0.4), 0.0, math.cos(0.4)])
    light = LightRig(direction=direction, intensity=np.array([0.9, 0.8, 0.7]), ambient=0.5)
    img, hit = shade_frame(mesh, mat, light, 16, 16)
    ndotl = direction[2]  # flat normal (0, 0, 1)
    want = np.array([0.5, 0.25, 0.75]) * (0.3 * 0.5 + 0.6 * np.array([0.9, 0.8, 0.7]) * ndotl)
    assert hit.all()
    assert np.abs(img - want).max() <= 1e-12


def test_grazing_light_leaves_only_ambient():
    mesh = square_mesh(lambda x, y: 0.0)
    mat = Material(texture=solid_texture((1.0, 1.0, 1.0)), ambient=0.0,
                   diffuse=0.8, specular=0.0, shininess=5.0)
    light = LightRig(direction=np.array([1.0, 0.0, 0.0]),
                     intensity=np.ones(3), ambient=1.0)
    img, hit = shade_frame(mesh, mat, light, 8, 8)
    assert hit.all()
    assert np.abs(img).max() == 0.0  # light orthogonal to the normal


def test_specular_mirror_aligned_closed_form():
    # light along +z onto a flat +z normal: r = (0, 0, 1) = v, so the
    # specular term is exactly k_s * L, untinted by the texture
    mesh = square_mesh(lambda x, y: 0.0)
    mat = Material(texture=solid_texture((0.2, 0.9, 0.4)), ambient=0.0,
                   diffuse=0.0, specular=0.35, shininess=17.0)
    light = LightRig(direction=np.array([0.0, 0.0, 1.0]),
                     intensity=np.array([0.6, 0.5, 1.0]), ambient=0.7)
    img, hit = shade_frame(mesh, mat, light, 8, 8)
    want = 0.35 * np.array([0.6, 0.5, 1.0])
    assert np.abs(img[hit] - want).max() <= 1e-12


def test_shading_interpolates_vertex_normals():
    # a fake 45-degree normal at every vertex must shade like that normal
    mesh = square_mesh(lambda x, y: 0.0)
    s = 1 / math.sqrt(2)
    tilted = TriangleMesh(vertices=mesh.vertices, faces=mesh.faces,
                          normals=np.tile((s, 0.0, s), (4, 1)), uv=mesh.uv)
    mat = Material(texture=solid_texture((1.0, 1.0, 1.0)), ambient=0.0,
                   diffuse=1.0, specular=0.0, shininess=1.0)
    light = LightRig(direction=np.array([0.0, 0.0, 1.0]),
                     intensity=np.ones(3), ambient=0.0)
    img, hit = shade_frame(tilted, mat, light, 8, 8)
    assert np.abs(img[hit] - s).max() <= 1e-12


# ---------------------------------------------------------------------------
# The ambiguity the losses are built around: moving the scene along the
# viewing axis changes the depth but not the image.

def test_axis_translation_shifts_depth_not_image():
    r = rng()
    params = default_params()
    phase = sample_phase_field(params, r)
    traj = sample_trajectory(r, TrajectoryRanges(), params.frames)
    mat = Material(texture=solid_texture((0.6, 0.6, 0.6)), ambient=0.2,
                   diffuse=0.7, specular=0.1, shininess=12.0)
    light = sample_light(r, LightRanges())

    from nrdk.synth import build_surface
    surface = build_surface(params, phase, traj)
    c = 0.8125
    for t in range(params.frames):
        mesh = mesh_from_surface(surface, t)
        lifted = TriangleMesh(vertices=mesh.vertices + (0.0, 0.0, c),
                              faces=mesh.faces, normals=mesh.normals, uv=mesh.uv)
        img0, hit0 = shade_frame(mesh, mat, light, 32, 32)
        img1, hit1 = shade_frame(lifted, mat, light, 32, 32)
        d0, _ = raycast_depth(mesh, 32, 32)
        d1, _ = raycast_depth(lifted, 32, 32)
        assert np.array_equal(hit0, hit1)
        assert np.abs(img1 - img0).max() <= 1e-12
        assert np.abs((d1 - d0)[hit0] - c).max() <= 1e-12


# ---------------------------------------------------------------------------
# Clip assembly.

def test_make_clip_shapes_and_hit_consistency():
    r = rng()
    params = default_params(frames=3)
    mat = sample_material(r, MaterialRanges(), solid_texture((0.5, 0.5, 0.5)))
    light = sample_light(r, LightRanges())
    clip = make_clip(params, mat, light, 0.0, r, width=24, height=24, seed=7)
    assert clip.render.data.shape == (3, 24, 24, 3)
    assert clip.depth.data.shape == (3, 24, 24, 1)
    assert clip.hit.shape == (3, 24, 24)
    assert clip.render.data.min() >= 0.0 and clip.render.data.max() <= 1.0
    # depth equals background exactly where nothing was hit
    assert (clip.depth.data[~clip.hit] == BACKGROUND_DEPTH).all()
    assert clip.meta.seed == 7


def test_make_clip_deterministic():
    params = default_params()
    mat = Material(texture=solid_texture((0.4, 0.4, 0.4)), ambient=0.25,
                   diffuse=0.7, specular=0.05, shininess=20.0)
    light = LightRig(direction=np.array([0.2, 0.1, 0.9]) / np.linalg.norm([0.2, 0.1, 0.9]),
                     intensity=np.ones(3) * 0.9, ambient=0.9)
    a = make_clip(params, mat, light, 0.005, np.random.default_rng(404), width=24, height=24)
    b = make_clip(params, mat, light, 0.005, np.random.default_rng(404), width=24, height=24)
    assert np.array_equal(a.render.data, b.render.data)
    assert np.array_equal(a.depth.data, b.depth.data)
    assert a.meta.digest() == b.meta.digest()


def test_make_clip_noise_statistics():
    params = default_params(frames=4)
    mat = Material(texture=solid_texture((0.5, 0.5, 0.5)), ambient=0.8,
                   diffuse=0.3, specular=0.0, shininess=5.0)
    light = LightRig(direction=np.array([0.0, 0.0, 1.0]), intensity=np.ones(3) * 0.5,
                     ambient=0.6)
    sigma = 0.01
    # identical generator seeds: phase and trajectory draws coincide, so the
    # difference between the two renders is exactly the additive noise
    clean = make_clip(params, mat, light, 0.0, np.random.default_rng(11), width=48, height=48)
    noisy = make_clip(params, mat, light, sigma, np.random.default_rng(11), width=48, height=48)
    diff = (noisy.render.data - clean.render.data)[clean.hit]
    assert abs(diff.std() - sigma) <= 0.05 * sigma
    assert abs(diff.mean()) <= 3 * sigma / math.sqrt(diff.size)


def test_make_clip_rejects_bad_noise():
    params = default_params()
    mat = Material(texture=solid_texture((0.5, 0.5, 0.5)), ambient=0.3,
                   diffuse=0.6, specular=0.0, shininess=5.0)
    light = LightRig(direction=np.array([0.0, 0.0, 1.0]), intensity=np.ones(3), ambient=1.0)
    with pytest.raises(ConfigError):
        make_clip(params, mat, light, -0.1, rng())


def test_clip_meta_digest_layout():
    meta = ClipMeta(seed=987654321, params={"a": 1, "b": [2.5, 3.5]})
    d = meta.digest()
    assert len(d) == 64
    assert int.from_bytes(d[:8], "little") == 987654321
    import hashlib
    import json
    payload = json.dumps({"a": 1, "b": [2.5, 3.5]}, sort_keys=True,
                         separators=(",", ":")).encode()
    assert d[8:] == hashlib.sha512(payload).digest()[:56]
    assert ClipMeta(seed=987654321, params={"a": 2}).digest() != d


# ---------------------------------------------------------------------------
# Samplers and validation.

def test_sample_light_respects_ranges():
    r = rng()
    ranges = LightRanges(polar=(0.2, 0.7), azimuth=(1.0, 2.0),
                         intensity=(0.5, 0.9), ambient=(0.6, 1.0))
    for _ in range(50):
        light = sample_light(r, ranges)
        assert abs(np.linalg.norm(light.direction) - 1.0) <= 1e-12
        polar = math.acos(light.direction[2])
        assert 0.2 - 1e-9 <= polar <= 0.7 + 1e-9
        azim = math.atan2(light.direction[1], light.direction[0])
        assert 1.0 - 1e-9 <= azim <= 2.0 + 1e-9
        assert (light.intensity >= 0.5).all() and (light.intensity <= 0.9).all()
        assert 0.6 <= light.ambient <= 1.0


def test_material_and_light_validation():
    tex = solid_texture((0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        Material(texture=tex, ambient=-0.1, diffuse=0.5, specular=0.1, shininess=5.0)
    with pytest.raises(ConfigError):
        Material(texture=tex, ambient=0.1, diffuse=0.5, specular=0.1, shininess=0.5)
    with pytest.raises(ConfigError):
        LightRig(direction=np.array([0.0, 0.0, 2.0]), intensity=np.ones(3), ambient=1.0)
    with pytest.raises(ConfigError):
        LightRig(direction=np.array([0.0, 0.0, 1.0]), intensity=-np.ones(3), ambient=1.0)


# ---------------------------------------------------------------------------
# Textures.

def test_procedural_texture_contract():
    src = ProceduralTextures(contrast=(0.05, 0.35))
    r = rng()
    for _ in range(5):
        tex = src.sample(r)
        assert tex.data.shape == (TEXTURE_SIZE, TEXTURE_SIZE, 3)
        assert tex.data.min() >= 0.0 and tex.data.max() <= 1.0
        assert tex.source == "procedural"
        # the two-color ramp bounds the spread along any channel
        spread = tex.data.reshape(-1, 3).max(axis=0) - tex.data.reshape(-1, 3).min(axis=0)
        assert spread.max() <= 0.35 + 1e-12


def test_directory_textures_crop_and_tile(tmp_path):
    r = rng()
    big = (r.random((300, 400, 3)) * 255).astype(np.uint8)
    Image.fromarray(big).save(tmp_path / "big.png")
    small = (r.random((40, 50, 3)) * 255).astype(np.uint8)
    Image.fromarray(small).save(tmp_path / "small.png")
    src = DirectoryTextures(tmp_path)
    seen = set()
    for _ in range(20):
        tex = src.sample(r)
        seen.add(tex.source)
        assert tex.data.shape == (TEXTURE_SIZE, TEXTURE_SIZE, 3)
        if tex.source == "big.png":
            row, col = tex.origin
            want = big[row:row + TEXTURE_SIZE, col:col + TEXTURE_SIZE] / 255.0
            assert np.abs(tex.data - want).max() <= 1e-12
    assert seen == {"big.png", "small.png"}  # both files get picked


def test_directory_textures_errors(tmp_path):
    with pytest.raises(ConfigError):
        DirectoryTextures(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigError):
        DirectoryTextures(empty)
