"""Procedural synthesis of non-rigidly deforming surface patches.

A patch is a square over the bi-unit domain (-1, 1)^2, displaced by a
3-channel field obtained in the spectral domain and carried through a rigid
trajectory.  Per channel, the spectrum at integer wavenumber u is

    S(u, t) = w(|u|) * exp(-xi |u|^2) * exp(-u^T Sigma u) * cos(t * phi(u) + theta(u))

where ``w(r) = 1 - exp(-(r / r0)^p)`` vanishes at r = 0, which forces the
spatial mean of every channel to zero before windowing.  The displacement is
the real part of the orthonormal inverse FFT of S, scaled per channel by
diag(zeta, zeta, 1), windowed by a spatial envelope in nu, and scaled by
kappa.  Taking the real part halves the spectrum's effective energy exactly:
for any spectrum S, Re(ifft(S)) = ifft((S + conj-mirror(S)) / 2), so this is
the same field the Hermitian-symmetrized spectrum would give.

The rigid trajectory applies a per-frame rotation and translation, each a
single cosine in time so that clips stay smooth.  Time runs over [0, 1] with
frames at ``linspace(0, 1, frames)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DeformRanges, TrajectoryRanges
from .core import ifft2_array, wavenumbers
from .errors import ConfigError, SizeError

__all__ = [
    "DeformationParams",
    "PhaseField",
    "EuclideanTrajectory",
    "SurfaceSequence",
    "sample_params",
    "sample_phase_field",
    "sample_trajectory",
    "spectral_envelope",
    "displacement_field",
    "displacement_stack",
    "displacement_rate_bound",
    "build_surface",
]


@dataclass(frozen=True)
class DeformationParams:
    """Scalar parameters of the displacement model for one clip."""

    kappa: float                 # overall amplitude
    nu: float                    # spatial envelope falloff
    zeta: float                  # in-plane scaling relative to out-of-plane
    xi: float                    # isotropic spectral falloff
    sigma: np.ndarray            # 2x2 symmetric positive-definite anisotropy form
    w_r0: float                  # DC-suppression radius scale
    w_p: float                   # DC-suppression sharpness
    phase_speed_scale: float     # angular speed per unit wavenumber
    grid_n: int                  # mesh vertices per side; grid_n - 1 is the FFT size
    frames: int
    envelope: str = "gaussian"   # "gaussian" anchors the border, "complement" the center
    rng_stream: int = 0          # stream id the clip's draws came from

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.shape != (2, 2):
            raise ConfigError(f"sigma must be 2x2, got shape {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ConfigError("sigma must be symmetric")
        eig = np.linalg.eigvalsh(sigma)
        if eig.min() <= 0:
            raise ConfigError(f"sigma must be positive definite, eigenvalues {eig}")
        object.__setattr__(self, "sigma", sigma)
        for name, lo in (("kappa", 0.0), ("nu", 0.0), ("zeta", 0.0), ("xi", 0.0),
                         ("w_r0", 1e-12), ("w_p", 0.0), ("phase_speed_scale", 0.0)):
            v = getattr(self, name)
            if not math.isfinite(v) or v < lo:
                raise ConfigError(f"{name} must be finite and >= {lo}, got {v}")
        n = self.grid_n - 1
        if n < 2 or (n & (n - 1)):
            raise ConfigError(f"grid_n - 1 must be a power of two, got grid_n={self.grid_n}")
        if self.frames < 2:
            raise ConfigError(f"frames must be >= 2, got {self.frames}")
        if self.envelope not in ("gaussian", "complement"):
            raise ConfigError(f"envelope must be 'gaussian' or 'complement', got {self.envelope!r}")

    @property
    def fft_size(self) -> int:
        return self.grid_n - 1

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "nu": self.nu, "zeta": self.zeta, "xi": self.xi,
            "sigma": np.asarray(self.sigma).tolist(),
            "w_r0": self.w_r0, "w_p": self.w_p,
            "phase_speed_scale": self.phase_speed_scale,
            "grid_n": self.grid_n, "frames": self.frames,
            "envelope": self.envelope, "rng_stream": self.rng_stream,
        }


@dataclass(frozen=True)
class PhaseField:
    """Per-wavenumber, per-channel initial phase and angular speed."""

    theta: np.ndarray  # (N, N, 3), values in [0, 2*pi)
    phi: np.ndarray    # (N, N, 3), values >= 0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        phi = np.asarray(self.phi, dtype=np.float64)
        if theta.ndim != 3 or theta.shape[2] != 3 or theta.shape != phi.shape:
            raise SizeError(f"phase grids must both be (N, N, 3), got {theta.shape} and {phi.shape}")
        if (phi < 0).any():
            raise ConfigError("angular speeds must be non-negative")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)


def _rodrigues(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices about a fixed unit axis for a vector of angles."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    eye = np.eye(3)[None]
    return c * eye + s * k[None] + (1.0 - c[:, 0, 0])[:, None, None] * np.outer(axis, axis)[None]


@dataclass(frozen=True)
class EuclideanTrajectory:
    """Per-frame rigid motion: rotations (F, 3, 3) and translations (F, 3)."""

    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotations, dtype=np.float64)
        tr = np.asarray(self.translations, dtype=np.float64)
        if rot.ndim != 3 or rot.shape[1:] != (3, 3) or tr.shape != (rot.shape[0], 3):
            raise SizeError(f"expected (F, 3, 3) and (F, 3), got {rot.shape} and {tr.shape}")
        eye = np.eye(3)
        err = np.abs(rot @ np.swapaxes(rot, 1, 2) - eye).max()
        if err > 1e-12:
            raise ConfigError(f"rotations not orthonormal (max deviation {err:.3e})")
        if (np.linalg.det(rot) <= 0).any():
            raise ConfigError("rotations must be orientation preserving")
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "translations", tr)

    @property
    def frames(self) -> int:
        return self.rotations.shape[0]

    def max_step_angle(self) -> float:
        """Largest frame-to-frame relative rotation angle, radians."""
        rel = np.swapaxes(self.rotations[:-1], 1, 2) @ self.rotations[1:]
        tr = np.trace(rel, axis1=1, axis2=2)
        cosang = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
        return float(np.arccos(cosang).max()) if len(tr) else 0.0

    @classmethod
    def identity(cls, frames: int) -> "EuclideanTrajectory":
        return cls(np.broadcast_to(np.eye(3), (frames, 3, 3)).copy(), np.zeros((frames, 3)))

    @classmethod
    def from_cosine(cls, axis, angle_amp, angle_phase, shift_amp, shift_phase,
                    frames: int, max_step_angle: float = math.pi) -> "EuclideanTrajectory":
        """Single-cosine curves: angle(t) = A cos(pi t + p0), likewise per shift axis."""
        axis = np.asarray(axis, dtype=np.float64)
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise ConfigError("rotation axis must be non-zero")
        axis = axis / norm
        t = np.linspace(0.0, 1.0, frames)
        angles = angle_amp * np.cos(math.pi * t + angle_phase)
        shifts = np.asarray(shift_amp)[None, :] * np.cos(math.pi * t[:, None] + np.asarray(shift_phase)[None, :])
        traj = cls(_rodrigues(axis, angles), shifts)
        step = traj.max_step_angle()
        if step > max_step_angle:
            raise ConfigError(f"frame-to-frame rotation {step:.4f} exceeds cap {max_step_angle:.4f}")
        return traj


@dataclass(frozen=True)
class SurfaceSequence:
    """Deformed mesh vertex positions per frame plus their parameter coords."""

    vertices: np.ndarray      # (F, grid_n, grid_n, 3)
    param_coords: np.ndarray  # (grid_n, grid_n, 2), the undeformed positions

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        p = np.asarray(self.param_coords, dtype=np.float64)
        if v.ndim != 4 or v.shape[3] != 3:
            raise SizeError(f"vertices must be (F, n, n, 3), got {v.shape}")
        if p.shape != (v.shape[1], v.shape[2], 2):
            raise SizeError(f"param_coords must be {(v.shape[1], v.shape[2], 2)}, got {p.shape}")
        if not np.isfinite(v).all():
            raise SizeError("vertices contain non-finite values")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "param_coords", p)

    @property
    def frames(self) -> int:
        return self.vertices.shape[0]

    @property
    def grid_n(self) -> int:
        return self.vertices.shape[1]


def _log_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def sample_params(rng: np.random.Generator, ranges: DeformRanges, grid_n: int,
                  frames: int, rng_stream: int = 0) -> DeformationParams:
    """Draw one clip's deformation parameters from the configured ranges.

    The anisotropy form is built from a uniform rotation angle and two
    log-uniform eigenvalues, so its eigenvalue pair always lies inside
    ``ranges.sigma_eig``.
    """
    ranges.validate()
    ang = rng.uniform(0.0, 2.0 * math.pi)
    eig = _log_uniform(rng, ranges.sigma_eig[0], ranges.sigma_eig[1], size=2)
    c, s = math.cos(ang), math.sin(ang)
    rot = np.array([[c, -s], [s, c]])
    sigma = rot @ np.diag(eig) @ rot.T
    sigma = 0.5 * (sigma + sigma.T)  # exact symmetry despite rounding
    return DeformationParams(
        kappa=rng.uniform(*ranges.kappa),
        nu=rng.uniform(*ranges.nu),
        zeta=rng.uniform(*ranges.zeta),
        xi=rng.uniform(*ranges.xi),
        sigma=sigma,
        w_r0=rng.uniform(*ranges.w_r0),
        w_p=rng.uniform(*ranges.w_p),
        phase_speed_scale=rng.uniform(*ranges.phase_speed),
        grid_n=grid_n,
        frames=frames,
        envelope=ranges.envelope,
        rng_stream=rng_stream,
    )


def sample_phase_field(params: DeformationParams, rng: np.random.Generator) -> PhaseField:
    """Initial phases i.i.d. uniform per channel; speeds phase_speed_scale * |u|."""
    n = params.fft_size
    kx, ky = wavenumbers(n, n)
    r = np.hypot(kx, ky)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=(n, n, 3))
    phi = np.repeat((params.phase_speed_scale * r)[:, :, None], 3, axis=2)
    return PhaseField(theta=theta, phi=phi)


def sample_trajectory(rng: np.random.Generator, ranges: TrajectoryRanges,
                      frames: int) -> EuclideanTrajectory:
    """Draw a rigid-motion path; never violates the step cap.

    A cosine path of amplitude A steps at most A * 2 sin(pi / (2 (F - 1)))
    per frame over any phase, so the amplitude range is intersected with
    the cap-implied bound instead of rejecting unlucky draws.  At the
    default sixteen frames the bound is far above the range and the draw
    distribution is untouched.
    """
    ranges.validate()
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:  # essentially never loops
        axis = rng.normal(size=3)
    lo, hi = ranges.angle_amp
    if frames > 1:
        worst = 2.0 * math.sin(math.pi / (2.0 * (frames - 1)))
        hi = min(hi, ranges.max_step_angle / worst)
        lo = min(lo, hi)
    angle_amp = rng.uniform(lo, hi)
    shift_amp = np.array([
        rng.uniform(*ranges.shift_xy_amp),
        rng.uniform(*ranges.shift_xy_amp),
        rng.uniform(*ranges.shift_z_amp),
    ])
    return EuclideanTrajectory.from_cosine(
        axis=axis,
        angle_amp=angle_amp,
        angle_phase=rng.uniform(0.0, 2.0 * math.pi),
        shift_amp=shift_amp,
        shift_phase=rng.uniform(0.0, 2.0 * math.pi, size=3),
        frames=frames,
        max_step_angle=ranges.max_step_angle,
    )


def spectral_envelope(params: DeformationParams) -> np.ndarray:
    """The time-independent spectral weight w(|u|) exp(-xi |u|^2) exp(-u^T Sigma u)."""
    n = params.fft_size
    kx, ky = wavenumbers(n, n)
    r2 = kx * kx + ky * ky
    r = np.sqrt(r2)
    w = 1.0 - np.exp(-np.power(r / params.w_r0, params.w_p, where=r > 0, out=np.zeros_like(r)))
    w[0, 0] = 0.0  # w(0) = 0 exactly: no DC energy
    s = params.sigma
    quad = s[0, 0] * kx * kx + (s[0, 1] + s[1, 0]) * kx * ky + s[1, 1] * ky * ky
    return w * np.exp(-params.xi * r2) * np.exp(-quad)


def _grid_positions(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Periodic sample positions x_k = -1 + 2k/n of the FFT grid."""
    x = -1.0 + 2.0 * np.arange(n) / n
    return np.meshgrid(x, x, indexing="xy")


def _spatial_envelope(params: DeformationParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    g = np.exp(-params.nu * (x * x + y * y))
    return g if params.envelope == "gaussian" else 1.0 - g


def displacement_stack(params: DeformationParams, phase: PhaseField,
                       times: np.ndarray, apply_envelope: bool = True) -> np.ndarray:
    """Displacement fields at the given times, shape (T, N, N, 3).

    Values live on the periodic FFT grid (positions x_k = -1 + 2k/n); the
    mesh builder wraps the right/top border on afterwards.
    """
    n = params.fft_size
    if phase.theta.shape[:2] != (n, n):
        raise SizeError(f"phase field is {phase.theta.shape[:2]}, params expect {(n, n)}")
    times = np.asarray(times, dtype=np.float64)
    env = spectral_envelope(params)
    # (T, 3, N, N) spectra; cos makes them real-valued.
    arg = times[:, None, None, None] * phase.phi.transpose(2, 0, 1)[None] \
        + phase.theta.transpose(2, 0, 1)[None]
    spectra = env[None, None] * np.cos(arg)
    fields = ifft2_array(spectra).real  # (T, 3, N, N)
    fields = np.moveaxis(fields, 1, 3)  # (T, N, N, 3)
    fields = fields * np.array([params.zeta, params.zeta, 1.0])
    if apply_envelope:
        x, y = _grid_positions(n)
        fields = fields * _spatial_envelope(params, x, y)[None, :, :, None]
    return params.kappa * fields


def displacement_field(params: DeformationParams, phase: PhaseField, t: float,
                       apply_envelope: bool = True) -> np.ndarray:
    """The 3-channel displacement field at one time, shape (N, N, 3)."""
    return displacement_stack(params, phase, np.array([t]), apply_envelope)[0]


def displacement_rate_bound(params: DeformationParams, phase: PhaseField) -> float:
    """An upper bound on max |d/dt d(x, t)| over x, t, channels.

    The time derivative's spectrum is the envelope times phi * |sin|, and the
    orthonormal inverse FFT of a spectrum S is bounded by sum |S| / n, so the
    per-channel rate is at most kappa * scale_c * sum(env * phi) / n.
    """
    n = params.fft_size
    env = spectral_envelope(params)
    per_channel = np.array([
        (env * phase.phi[:, :, c]).sum() / n for c in range(3)
    ])
    per_channel *= np.array([params.zeta, params.zeta, 1.0])
    return float(params.kappa * per_channel.max())


def build_surface(params: DeformationParams, phase: PhaseField,
                  trajectory: EuclideanTrajectory) -> SurfaceSequence:
    """Apply displacement and rigid motion to the flat patch.

    Vertices per frame are R_t (x + d(x, t)) + s_t on an inclusive
    grid_n x grid_n grid spanning [-1, 1]^2; the right/top border reuses the
    periodic field's left/bottom samples.  With kappa = 0 and the identity
    trajectory this is the flat square z = 0.
    """
    if trajectory.frames != params.frames:
        raise SizeError(f"trajectory has {trajectory.frames} frames, params expect {params.frames}")
    n = params.fft_size
    times = np.linspace(0.0, 1.0, params.frames)
    d = displacement_stack(params, phase, times)  # (F, n, n, 3)
    wrap = np.arange(params.grid_n) % n
    d = d[:, wrap][:, :, wrap]  # (F, grid_n, grid_n, 3)

    x = np.linspace(-1.0, 1.0, params.grid_n)
    px, py = np.meshgrid(x, x, indexing="xy")
    base = np.stack([px, py, np.zeros_like(px)], axis=2)  # (grid_n, grid_n, 3)

    pts = base[None] + d
    rotated = np.einsum("fij,fabj->fabi", trajectory.rotations, pts)
    verts = rotated + trajectory.translations[:, None, None, :]
    return SurfaceSequence(vertices=verts, param_coords=np.stack([px, py], axis=2))
