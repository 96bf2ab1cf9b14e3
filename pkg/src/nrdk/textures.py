"""Texture sources: random crops of user images, or procedural noise.

Textures are 256x256 RGB arrays in [0, 1] mapped over the patch's parameter
domain, so they stick to the surface as it deforms.  Directory sources crop
at a position uniform over the valid origin grid and tile images that are
smaller than the crop; the procedural fallback colorizes band-limited noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import fft2_array, ifft2_array
from .errors import ConfigError, DataFormatError
from .config import TextureConfig

TEXTURE_SIZE = 256

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class Texture:
    """A crop with provenance: where it came from and which origin was used."""

    data: np.ndarray            # (256, 256, 3) float64 in [0, 1]
    origin: tuple[int, int]     # (row, col) of the crop in the source image
    source: str                 # file name or "procedural"

    def __post_init__(self):
        if self.data.shape != (TEXTURE_SIZE, TEXTURE_SIZE, 3):
            raise ConfigError(f"texture must be {TEXTURE_SIZE}x{TEXTURE_SIZE}x3, got {self.data.shape}")


class ProceduralTextures:
    """Band-limited noise mapped through a random two-color ramp.

    ``contrast`` bounds the color span of the ramp; texture contrast
    competes with shading for the same brightness budget, so the training
    profile keeps it mild while the scene profile turns it up.
    """

    def __init__(self, contrast: tuple[float, float] = (0.05, 0.35)):
        self.contrast = contrast

    def sample(self, rng: np.random.Generator) -> Texture:
        n = TEXTURE_SIZE
        kx = np.fft.fftfreq(n) * n
        kxg, kyg = np.meshgrid(kx, kx, indexing="xy")
        r = np.hypot(kxg, kyg)
        center = rng.uniform(2.0, 24.0)
        width = rng.uniform(1.0, 8.0)
        band = np.exp(-((r - center) ** 2) / (2.0 * width * width))
        noise = rng.normal(size=(n, n))
        field = ifft2_array(fft2_array(noise) * band).real
        lo, hi = field.min(), field.max()
        field = (field - lo) / (hi - lo) if hi > lo else np.full_like(field, 0.5)
        base = rng.uniform(0.30, 0.70, size=3)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        span = rng.uniform(*self.contrast)
        c0 = base - 0.5 * span * axis
        c1 = base + 0.5 * span * axis
        data = c0[None, None] + field[:, :, None] * (c1 - c0)[None, None]
        return Texture(data=np.clip(data, 0.0, 1.0), origin=(0, 0), source="procedural")


class DirectoryTextures:
    """Uniform random crops from the images found in a directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise ConfigError(f"texture directory not found: {self.path}")
        self.files = sorted(p for p in self.path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not self.files:
            raise ConfigError(f"no images in texture directory: {self.path}")
        self._cache: dict[Path, np.ndarray] = {}

    def _load(self, path: Path) -> np.ndarray:
        if path not in self._cache:
            from PIL import Image  # deferred: only image-backed runs need it

            try:
                with Image.open(path) as img:
                    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
            except OSError as exc:
                raise DataFormatError(f"cannot decode texture image {path}: {exc}") from exc
            h, w = arr.shape[:2]
            if h < TEXTURE_SIZE or w < TEXTURE_SIZE:
                reps = (-(-TEXTURE_SIZE // h), -(-TEXTURE_SIZE // w), 1)
                arr = np.tile(arr, reps)
            self._cache[path] = arr
        return self._cache[path]

    def sample(self, rng: np.random.Generator) -> Texture:
        path = self.files[int(rng.integers(0, len(self.files)))]
        arr = self._load(path)
        h, w = arr.shape[:2]
        row = int(rng.integers(0, h - TEXTURE_SIZE + 1))
        col = int(rng.integers(0, w - TEXTURE_SIZE + 1))
        crop = arr[row:row + TEXTURE_SIZE, col:col + TEXTURE_SIZE]
        return Texture(data=crop.copy(), origin=(row, col), source=path.name)


def texture_source(cfg: TextureConfig):
    """Build the texture source described by the config."""
    cfg.validate()
    if cfg.source == "procedural":
        return ProceduralTextures(contrast=cfg.contrast)
    return DirectoryTextures(cfg.path)
