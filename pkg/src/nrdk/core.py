"""Dense video tensors, 2D spectra, and resampling shared by the pipeline.

Conventions fixed here and relied on everywhere else:

* numeric data is float64 (complex128 in the spectral domain); narrower
  precision is an internal concern of individual modules,
* Fourier transforms use the orthonormal scaling, ``1/sqrt(W*H)`` in both
  directions, and are restricted to power-of-two sizes,
* spectra store the DC component at index (0, 0) with integer wavenumbers
  wrapping to [-N/2, N/2) in standard FFT order,
* video data is laid out ``(frames, height, width, channels)`` in C order,
* pixel (row i, col j) of a W x H frame has center
  ``x = -1 + (j + 0.5) * 2/W``, ``y = -1 + (i + 0.5) * 2/H``; the row index
  grows with y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class VideoTensor:
    """A (frames, height, width, channels) float64 array with finite values.

    The wrapper is thin on purpose: modules pass raw arrays internally and
    use VideoTensor at their public boundaries, where the finiteness and
    layout guarantees are worth checking once.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise SizeError(f"video data must be (T, H, W, C), got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise SizeError("video data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @classmethod
    def from_frames(cls, frames: np.ndarray) -> "VideoTensor":
        """Wrap a (T, H, W) array as a single-channel video."""
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim != 3:
            raise SizeError(f"expected (T, H, W), got shape {arr.shape}")
        return cls(arr[..., None])

    def planes(self) -> np.ndarray:
        """Single-channel video as a (T, H, W) array view."""
        if self.channels != 1:
            raise SizeError(f"expected 1 channel, got {self.channels}")
        return self.data[..., 0]


def grayscale(video: VideoTensor) -> VideoTensor:
    """Collapse RGB to luma with weights 0.299/0.587/0.114.

    Single-channel input is returned unchanged (idempotent on gray data).
    """
    if video.channels == 1:
        return video
    if video.channels != 3:
        raise SizeError(f"grayscale expects 1 or 3 channels, got {video.channels}")
    return VideoTensor(np.tensordot(video.data, GRAY_WEIGHTS, axes=([3], [0]))[..., None])


@dataclass(frozen=True)
class ComplexGrid:
    """A (height, width) complex128 spectrum, DC at index (0, 0)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2:
            raise SizeError(f"spectrum must be 2D, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag


def _check_pow2(shape) -> None:
    h, w = shape[-2], shape[-1]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise SizeError(f"FFT sizes must be powers of two, got {h}x{w}")


def fft2_array(arr: np.ndarray) -> np.ndarray:
    """Orthonormal forward 2D FFT over the last two axes."""
    _check_pow2(arr.shape)
    return np.fft.fft2(arr, norm="ortho")


def ifft2_array(arr: np.ndarray) -> np.ndarray:
    """Orthonormal inverse 2D FFT over the last two axes."""
    _check_pow2(arr.shape)
    return np.fft.ifft2(arr, norm="ortho")


def fft2(grid: ComplexGrid) -> ComplexGrid:
    return ComplexGrid(fft2_array(grid.data))


def ifft2(grid: ComplexGrid) -> ComplexGrid:
    return ComplexGrid(ifft2_array(grid.data))


def wavenumbers(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer wavenumber grids (kx, ky) in FFT order, DC at (0, 0)."""
    kx = np.fft.fftfreq(width) * width
    ky = np.fft.fftfreq(height) * height
    return np.meshgrid(kx, ky, indexing="xy")


def bilinear_resize(frames: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize over the last two axes of (..., H, W).

    Sample positions follow the pixel-center convention
    ``src = (dst + 0.5) * scale - 0.5`` with edge clamping, so affine
    functions are reproduced exactly away from the borders.
    """
    h, w = frames.shape[-2], frames.shape[-1]
    if new_h < 1 or new_w < 1:
        raise SizeError(f"target size must be positive, got {new_h}x{new_w}")

    def axis_weights(n_src, n_dst):
        pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo = np.clip(lo, 0, n_src - 1)
        hi = np.clip(lo + 1, 0, n_src - 1)
        return lo, hi, frac

    r0, r1, fr = axis_weights(h, new_h)
    c0, c1, fc = axis_weights(w, new_w)
    top = frames[..., r0, :]
    bot = frames[..., r1, :]
    rows = top + fr[:, None] * (bot - top)
    left = rows[..., :, c0]
    right = rows[..., :, c1]
    return left + fc * (right - left)


def average_pool_2x(frames: np.ndarray) -> np.ndarray:
    """2x2 block mean over the last two axes; dims must be even."""
    h, w = frames.shape[-2], frames.shape[-1]
    if h % 2 or w % 2:
        raise SizeError(f"average-pool-2x needs even dims, got {h}x{w}")
    shape = frames.shape[:-2] + (h // 2, 2, w // 2, 2)
    return frames.reshape(shape).mean(axis=(-3, -1))


def resample(video: VideoTensor, new_w: int, new_h: int, mode: str = "bilinear") -> VideoTensor:
    """Spatially resample every frame and channel of a video.

    ``bilinear`` handles arbitrary target sizes; ``average-pool-2x`` is the
    exact 2x2 block mean and requires the target to be exactly half the
    source in both dimensions.
    """
    planes = np.moveaxis(video.data, 3, 1)  # (T, C, H, W)
    if mode == "bilinear":
        out = bilinear_resize(planes, new_h, new_w)
    elif mode == "average-pool-2x":
        if new_w * 2 != video.width or new_h * 2 != video.height:
            raise SizeError(
                f"average-pool-2x target must be half the source, "
                f"got {video.width}x{video.height} -> {new_w}x{new_h}"
            )
        out = average_pool_2x(planes)
    else:
        raise SizeError(f"unknown resample mode {mode!r}")
    return VideoTensor(np.moveaxis(out, 1, 3))
