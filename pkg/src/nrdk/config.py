"""Generation configuration: parameter ranges and their JSON schema.

All stochastic clip parameters are drawn from closed ranges declared here.
A JSON config file may override any subset; unknown keys are rejected so a
typo cannot silently fall back to a default.  Precedence is CLI flag over
config file over the defaults below.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

Range = tuple[float, float]


def _check_range(name: str, r, lo_ok=-math.inf, hi_ok=math.inf) -> Range:
    try:
        lo, hi = float(r[0]), float(r[1])
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"{name}: expected a [lo, hi] pair, got {r!r}") from None
    if len(r) != 2:
        raise ConfigError(f"{name}: expected a [lo, hi] pair, got {r!r}")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(f"{name}: bounds must be finite, got {r!r}")
    if lo > hi:
        raise ConfigError(f"{name}: inverted range, {lo} > {hi}")
    if lo < lo_ok or hi > hi_ok:
        raise ConfigError(f"{name}: range [{lo}, {hi}] outside [{lo_ok}, {hi_ok}]")
    return (lo, hi)


@dataclass(frozen=True)
class DeformRanges:
    """Ranges for the spectral displacement model."""

    kappa: Range = (0.10, 0.35)        # overall displacement amplitude
    nu: Range = (0.4, 1.6)             # spatial envelope falloff
    zeta: Range = (0.2, 1.2)           # in-plane vs out-of-plane scaling
    xi: Range = (0.010, 0.045)         # isotropic spectral falloff (per squared wavenumber)
    sigma_eig: Range = (0.004, 0.050)  # eigenvalues of the anisotropy form, log-uniform
    w_r0: Range = (1.0, 3.0)           # radius scale of the DC-suppressing profile
    w_p: Range = (2.0, 4.0)            # sharpness of the DC-suppressing profile
    phase_speed: Range = (0.5, 4.0)    # angular speed per unit wavenumber
    envelope: str = "gaussian"         # "gaussian" anchors the border, "complement" the center

    def validate(self, prefix: str = "deform") -> None:
        for name, lo_ok in (
            ("kappa", 0.0), ("nu", 0.0), ("zeta", 0.0), ("xi", 0.0),
            ("w_p", 0.5), ("phase_speed", 0.0),
        ):
            _check_range(f"{prefix}.{name}", getattr(self, name), lo_ok=lo_ok)
        _check_range(f"{prefix}.sigma_eig", self.sigma_eig, lo_ok=1e-12)
        _check_range(f"{prefix}.w_r0", self.w_r0, lo_ok=1e-6)
        if self.envelope not in ("gaussian", "complement"):
            raise ConfigError(f"{prefix}.envelope: must be 'gaussian' or 'complement', got {self.envelope!r}")


@dataclass(frozen=True)
class TrajectoryRanges:
    """Ranges for the per-clip rigid motion (single-cosine curves)."""

    angle_amp: Range = (0.0, 0.25)     # rotation amplitude, radians
    shift_xy_amp: Range = (0.0, 0.10)  # in-plane translation amplitude
    shift_z_amp: Range = (0.0, 0.25)   # depth translation amplitude
    max_step_angle: float = 0.35       # hard cap on frame-to-frame rotation, radians

    def validate(self, prefix: str = "trajectory") -> None:
        _check_range(f"{prefix}.angle_amp", self.angle_amp, lo_ok=0.0)
        _check_range(f"{prefix}.shift_xy_amp", self.shift_xy_amp, lo_ok=0.0)
        _check_range(f"{prefix}.shift_z_amp", self.shift_z_amp, lo_ok=0.0)
        if not 0.0 < self.max_step_angle <= math.pi:
            raise ConfigError(f"{prefix}.max_step_angle: must be in (0, pi], got {self.max_step_angle}")


@dataclass(frozen=True)
class MaterialRanges:
    ambient: Range = (0.15, 0.40)
    diffuse: Range = (0.45, 0.90)
    specular: Range = (0.00, 0.15)
    shininess: Range = (5.0, 60.0)

    def validate(self, prefix: str = "material") -> None:
        for name in ("ambient", "diffuse", "specular"):
            _check_range(f"{prefix}.{name}", getattr(self, name), lo_ok=0.0)
        _check_range(f"{prefix}.shininess", self.shininess, lo_ok=1.0)


@dataclass(frozen=True)
class LightRanges:
    """Directional light placement and strength.

    The defaults keep the light oblique and inside one azimuthal sector:
    a head-on light carries no first-order slope information and a light
    that wanders the full circle flips the shading polarity between clips,
    both of which starve a small estimator.  The scene profile widens both.
    """

    polar: Range = (0.30, 0.80)        # angle from the viewing axis, radians
    azimuth: Range = (0.50, 1.30)      # angle in the image plane, radians
    intensity: Range = (0.7, 1.0)      # per-channel directional intensity
    ambient: Range = (0.8, 1.0)        # ambient intensity

    def validate(self, prefix: str = "light") -> None:
        _check_range(f"{prefix}.polar", self.polar, lo_ok=0.0, hi_ok=math.pi / 2)
        _check_range(f"{prefix}.azimuth", self.azimuth, lo_ok=-2.0 * math.pi, hi_ok=2.0 * math.pi)
        _check_range(f"{prefix}.intensity", self.intensity, lo_ok=0.0)
        _check_range(f"{prefix}.ambient", self.ambient, lo_ok=0.0)


@dataclass(frozen=True)
class TextureConfig:
    source: str = "procedural"         # "procedural" or "directory"
    path: str | None = None
    contrast: Range = (0.05, 0.35)     # color span of procedural textures

    def validate(self, prefix: str = "texture") -> None:
        if self.source not in ("procedural", "directory"):
            raise ConfigError(f"{prefix}.source: must be 'procedural' or 'directory', got {self.source!r}")
        if self.source == "directory" and not self.path:
            raise ConfigError(f"{prefix}.path: required when source is 'directory'")
        _check_range(f"{prefix}.contrast", self.contrast, lo_ok=0.0, hi_ok=1.0)


@dataclass(frozen=True)
class GenerationConfig:
    """Everything needed to synthesize one dataset, minus seed and count."""

    width: int = 64
    height: int = 64
    frames: int = 16
    grid_n: int = 65                   # mesh vertices per side; grid_n - 1 is the FFT size
    noise_sigma: Range = (0.0, 0.008)
    deform: DeformRanges = field(default_factory=DeformRanges)
    trajectory: TrajectoryRanges = field(default_factory=TrajectoryRanges)
    material: MaterialRanges = field(default_factory=MaterialRanges)
    light: LightRanges = field(default_factory=LightRanges)
    texture: TextureConfig = field(default_factory=TextureConfig)

    def validate(self) -> None:
        for name in ("width", "height", "frames", "grid_n"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 2:
                raise ConfigError(f"{name}: must be an integer >= 2, got {v!r}")
        n = self.grid_n - 1
        if n < 2 or (n & (n - 1)):
            raise ConfigError(f"grid_n: grid_n - 1 must be a power of two, got {self.grid_n}")
        _check_range("noise_sigma", self.noise_sigma, lo_ok=0.0)
        self.deform.validate()
        self.trajectory.validate()
        self.material.validate()
        self.light.validate()
        self.texture.validate()

    def to_dict(self) -> dict:
        """Nested plain-dict form; the inverse of ``config_from_dict``."""
        return asdict(self)


DEFAULT_CONFIG = GenerationConfig()

# Deliberately out-of-distribution ranges for full-frame evaluation scenes:
# stronger, lower-frequency deformation, harsher lighting, more noise.
SCENE_CONFIG = GenerationConfig(
    width=256,
    height=256,
    frames=16,
    grid_n=129,
    noise_sigma=(0.01, 0.04),
    deform=DeformRanges(
        kappa=(0.25, 0.55),
        nu=(0.2, 0.8),
        zeta=(0.5, 1.8),
        xi=(0.030, 0.090),
        sigma_eig=(0.010, 0.120),
        w_r0=(0.8, 2.0),
        w_p=(1.5, 3.0),
        phase_speed=(1.0, 6.0),
    ),
    trajectory=TrajectoryRanges(angle_amp=(0.05, 0.35), shift_xy_amp=(0.0, 0.15), shift_z_amp=(0.0, 0.35)),
    material=MaterialRanges(ambient=(0.10, 0.30), diffuse=(0.50, 1.00), specular=(0.10, 0.50), shininess=(3.0, 90.0)),
    light=LightRanges(polar=(0.2, 1.1), azimuth=(0.0, 2.0 * math.pi), intensity=(0.6, 1.0), ambient=(0.6, 1.0)),
    texture=TextureConfig(contrast=(0.20, 0.90)),
)


def _from_dict(cls, data: dict, prefix: str):
    """Build a dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(value, dict):
            kwargs[key] = _from_dict(type(getattr(defaults, key)), value, dotted)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> GenerationConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    try:
        cfg = _from_dict(GenerationConfig, data, "")
        cfg.validate()
    except (AttributeError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return cfg


def load_generation_config(path: str | Path) -> GenerationConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def override(cfg: GenerationConfig, **kwargs) -> GenerationConfig:
    out = replace(cfg, **kwargs)
    out.validate()
    return out
