"""Video containers, orthonormal FFT conventions, resampling oracles."""

import numpy as np
import pytest

from nrdk.core import (VideoTensor, average_pool_2x, bilinear_resize,
                       fft2_array, grayscale, ifft2_array, wavenumbers)
from nrdk.errors import SizeError


def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# FFT pair.

def test_fft_round_trip_many_sizes():
    r = rng()
    for n in (2, 4, 8, 16, 32, 64, 128, 256):
        x = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
        back = fft2_array(ifft2_array(x))
        assert np.abs(back - x).max() <= 1e-12 * max(1.0, np.abs(x).max())


def test_delta_constant_duality():
    # spectrum = delta at DC with magnitude sqrt(W*H) -> constant ones
    n = 16
    spec = np.zeros((n, n), dtype=complex)
    spec[0, 0] = n  # sqrt(n*n)
    grid = ifft2_array(spec)
    assert np.abs(grid - 1.0).max() <= 1e-13
    back = fft2_array(np.ones((n, n)))
    assert abs(back[0, 0] - n) <= 1e-13
    back[0, 0] = 0
    assert np.abs(back).max() <= 1e-13


def test_fft_linearity_and_parseval():
    r = rng()
    x = r.normal(size=(64, 64))
    y = r.normal(size=(64, 64))
    a, b = 1.7, -0.3
    lhs = fft2_array(a * x + b * y)
    rhs = a * fft2_array(x) + b * fft2_array(y)
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()
    # orthonormal scaling preserves energy
    ex = np.sum(np.abs(x) ** 2)
    ef = np.sum(np.abs(fft2_array(x)) ** 2)
    assert abs(ex - ef) <= 1e-10 * ex


def test_hermitian_spectrum_gives_real_field():
    r = rng()
    n = 32
    half = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    spec = half + np.conj(np.roll(np.flip(half, (0, 1)), 1, (0, 1)))
    field = ifft2_array(spec)
    assert np.abs(field.imag).max() <= 1e-12 * max(1.0, np.abs(field.real).max())


def test_fft_rejects_non_power_of_two():
    with pytest.raises(SizeError):
        fft2_array(np.zeros((12, 12)))
    with pytest.raises(SizeError):
        ifft2_array(np.zeros((8, 12)))


def test_wavenumber_layout():
    kx, ky = wavenumbers(8, 8)
    # DC at (0, 0); positive frequencies first, then the negative wrap
    assert kx[0, 0] == 0 and ky[0, 0] == 0
    assert list(kx[0]) == [0, 1, 2, 3, -4, -3, -2, -1]
    assert list(ky[:, 0]) == [0, 1, 2, 3, -4, -3, -2, -1]


# ---------------------------------------------------------------------------
# Video containers.

def test_video_tensor_contract():
    data = rng().random((4, 8, 6, 3))
    v = VideoTensor(data)
    assert (v.frames, v.height, v.width, v.channels) == (4, 8, 6, 3)
    with pytest.raises(SizeError):
        VideoTensor(np.zeros((4, 8, 6)))
    bad = data.copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(SizeError):
        VideoTensor(bad)


def test_grayscale_weights_and_idempotence():
    data = rng().random((2, 4, 4, 3))
    g = grayscale(VideoTensor(data))
    assert g.channels == 1
    # weights form a convex combination, so constant colors are preserved
    flat = VideoTensor(np.full((1, 4, 4, 3), 0.25))
    assert np.abs(grayscale(flat).data - 0.25).max() <= 1e-15
    again = grayscale(g)
    assert np.array_equal(again.data, g.data)


# ---------------------------------------------------------------------------
# Resampling.

def test_bilinear_downsample_upsample_ramp():
    # affine frames survive down/up resampling exactly away from the border
    h = w = 32
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ramp = 0.3 * i + 0.7 * j + 1.0
    down = bilinear_resize(ramp, w // 2, h // 2)
    up = bilinear_resize(down, w, h)
    interior = (slice(2, -2), slice(2, -2))
    assert np.abs(up[interior] - ramp[interior]).max() <= 1e-10


def test_bilinear_affine_exact_interior():
    h = w = 16
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    plane = 2.0 * i - 0.5 * j + 3.0
    out = bilinear_resize(plane, 24, 24)
    oi, oj = np.meshgrid(np.arange(24), np.arange(24), indexing="ij")
    # pixel-center mapping: source coordinate = (out + 0.5) * scale - 0.5
    si = (oi + 0.5) * (h / 24) - 0.5
    sj = (oj + 0.5) * (w / 24) - 0.5
    expect = 2.0 * si - 0.5 * sj + 3.0
    inside = (si >= 0) & (si <= h - 1) & (sj >= 0) & (sj <= w - 1)
    assert np.abs(out[inside] - expect[inside]).max() <= 1e-10


def test_average_pool_checkerboard():
    frame = np.indices((6, 8)).sum(axis=0) % 2  # perfect checkerboard
    video = frame[None].astype(np.float64)
    pooled = average_pool_2x(video)
    assert pooled.shape == (1, 3, 4)
    assert np.abs(pooled - 0.5).max() == 0.0


def test_average_pool_requires_even_dims():
    with pytest.raises(SizeError):
        average_pool_2x(np.zeros((1, 5, 8)))
