"""Ambiguity-invariant representations of depth maps.

Orthographic shading leaves a depth map identifiable only up to the group

    z~(x, y) = alpha * x + beta * y + lambda * z(x, y) + tau,   lambda > 0,

a sheared, stretched, offset relief.  This module provides the group
algebra, discrete 2-jets of depth frames, and two complete invariant fields
built from them:

* ``iota``: the Hessian divided by its Frobenius norm.  Shear and offset
  have zero second derivatives and the stretch cancels in the quotient, so
  iota is invariant under the full group.
* ``eta``: gradient and Hessian jointly divided by the Hessian's Frobenius
  norm, six components with the two mixed entries stored separately.  The
  gradient picks up the shear, so eta is invariant only under stretch and
  offset (lambda, tau).

The Frobenius norm always counts all four Hessian entries,
``sqrt(z_xx^2 + 2 z_xy^2 + z_yy^2)`` for the symmetric discrete jet.

Derivatives are central differences on the pixel-center grid (see core for
the pixel-to-domain mapping); the one-pixel border where the stencils do not
fit is marked invalid, as are pixels whose Hessian norm falls below a
threshold relative to the frame median.  The adjoints of the difference
operators are provided for analytic loss gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, FitError, SizeError

DEFAULT_EPS_REL = 1e-6


def pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) coordinate grids of pixel centers over (-1, 1)^2, shape (H, W)."""
    x = -1.0 + (np.arange(width) + 0.5) * (2.0 / width)
    y = -1.0 + (np.arange(height) + 0.5) * (2.0 / height)
    return np.meshgrid(x, y, indexing="xy")


def pixel_pitch(width: int, height: int) -> tuple[float, float]:
    return 2.0 / width, 2.0 / height


@dataclass(frozen=True)
class GbrParams:
    """One element (alpha, beta, lambda, tau) of the relief group."""

    alpha: float
    beta: float
    lam: float
    tau: float

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.lam, self.tau)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"group parameters must be finite, got {vals}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")

    def compose(self, first: "GbrParams") -> "GbrParams":
        """The element "apply ``first``, then self"."""
        return GbrParams(
            alpha=self.alpha + self.lam * first.alpha,
            beta=self.beta + self.lam * first.beta,
            lam=self.lam * first.lam,
            tau=self.tau + self.lam * first.tau,
        )

    def inverse(self) -> "GbrParams":
        inv_lam = 1.0 / self.lam
        return GbrParams(
            alpha=-self.alpha * inv_lam,
            beta=-self.beta * inv_lam,
            lam=inv_lam,
            tau=-self.tau * inv_lam,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.lam, self.tau)


def gbr_apply(z: np.ndarray, g: GbrParams) -> np.ndarray:
    """Transform a depth frame (H, W) by the group element g."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise SizeError(f"depth frame must be 2D, got shape {z.shape}")
    x, y = pixel_grid(z.shape[1], z.shape[0])
    return g.alpha * x + g.beta * y + g.lam * z + g.tau


# ---------------------------------------------------------------------------
# Discrete 2-jets and the adjoints of their difference operators.

def _interior_mask(height: int, width: int) -> np.ndarray:
    m = np.zeros((height, width), dtype=bool)
    m[1:-1, 1:-1] = True
    return m


def d_x(z: np.ndarray, hx: float) -> np.ndarray:
    out = np.zeros_like(z)
    out[1:-1, 1:-1] = (z[1:-1, 2:] - z[1:-1, :-2]) / (2.0 * hx)
    return out


def d_y(z: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(z)
    out[1:-1, 1:-1] = (z[2:, 1:-1] - z[:-2, 1:-1]) / (2.0 * hy)
    return out


def d_xx(z: np.ndarray, hx: float) -> np.ndarray:
    out = np.zeros_like(z)
    out[1:-1, 1:-1] = (z[1:-1, 2:] - 2.0 * z[1:-1, 1:-1] + z[1:-1, :-2]) / (hx * hx)
    return out


def d_yy(z: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(z)
    out[1:-1, 1:-1] = (z[2:, 1:-1] - 2.0 * z[1:-1, 1:-1] + z[:-2, 1:-1]) / (hy * hy)
    return out


def d_xy(z: np.ndarray, hx: float, hy: float) -> np.ndarray:
    out = np.zeros_like(z)
    out[1:-1, 1:-1] = (z[2:, 2:] - z[2:, :-2] - z[:-2, 2:] + z[:-2, :-2]) / (4.0 * hx * hy)
    return out


def d_x_adj(g: np.ndarray, hx: float) -> np.ndarray:
    """Transpose of d_x: scatter the interior cotangent back onto z."""
    out = np.zeros_like(g)
    c = g[1:-1, 1:-1] / (2.0 * hx)
    out[1:-1, 2:] += c
    out[1:-1, :-2] -= c
    return out


def d_y_adj(g: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(g)
    c = g[1:-1, 1:-1] / (2.0 * hy)
    out[2:, 1:-1] += c
    out[:-2, 1:-1] -= c
    return out


def d_xx_adj(g: np.ndarray, hx: float) -> np.ndarray:
    out = np.zeros_like(g)
    c = g[1:-1, 1:-1] / (hx * hx)
    out[1:-1, 2:] += c
    out[1:-1, 1:-1] -= 2.0 * c
    out[1:-1, :-2] += c
    return out


def d_yy_adj(g: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(g)
    c = g[1:-1, 1:-1] / (hy * hy)
    out[2:, 1:-1] += c
    out[1:-1, 1:-1] -= 2.0 * c
    out[:-2, 1:-1] += c
    return out


def d_xy_adj(g: np.ndarray, hx: float, hy: float) -> np.ndarray:
    out = np.zeros_like(g)
    c = g[1:-1, 1:-1] / (4.0 * hx * hy)
    out[2:, 2:] += c
    out[2:, :-2] -= c
    out[:-2, 2:] -= c
    out[:-2, :-2] += c
    return out


@dataclass(frozen=True)
class SecondOrderJet:
    """Value and central-difference derivatives of one depth frame.

    ``valid`` marks pixels where every stencil fits (the interior).  The
    stored derivative arrays are zero outside it.
    """

    z: np.ndarray
    zx: np.ndarray
    zy: np.ndarray
    zxx: np.ndarray
    zxy: np.ndarray
    zyy: np.ndarray
    valid: np.ndarray
    hx: float
    hy: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape


def jet(z: np.ndarray, pitch: tuple[float, float] | None = None) -> SecondOrderJet:
    """Discrete 2-jet of a depth frame.

    The pitch defaults to the pixel-center mapping of the frame onto
    (-1, 1)^2.  Frames must be at least 3x3 so the interior is non-empty.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise SizeError(f"depth frame must be 2D, got shape {z.shape}")
    if z.shape[0] < 3 or z.shape[1] < 3:
        raise SizeError(f"frame too small for a 2-jet, got {z.shape}")
    hx, hy = pitch if pitch is not None else pixel_pitch(z.shape[1], z.shape[0])
    return SecondOrderJet(
        z=z,
        zx=d_x(z, hx), zy=d_y(z, hy),
        zxx=d_xx(z, hx), zxy=d_xy(z, hx, hy), zyy=d_yy(z, hy),
        valid=_interior_mask(*z.shape),
        hx=hx, hy=hy,
    )


def hessian_norm(j: SecondOrderJet) -> np.ndarray:
    """Frobenius norm of the Hessian, counting the mixed entry twice."""
    return np.sqrt(j.zxx**2 + 2.0 * j.zxy**2 + j.zyy**2)


def _validity(j: SecondOrderJet, eps_rel: float) -> tuple[np.ndarray, np.ndarray]:
    """Joint validity mask (interior and non-degenerate) plus the norm."""
    norm = hessian_norm(j)
    interior = j.valid
    if not interior.any():
        return interior, norm
    med = float(np.median(norm[interior]))
    # strict: a planar frame (median 0) must come back fully masked, not 0/0
    return interior & (norm > eps_rel * med), norm


@dataclass(frozen=True)
class InvariantField:
    """A per-pixel invariant representation of one depth frame.

    ``kind`` is "gbr" (3 channels: scaled z_xx, z_xy, z_yy) or "trsc"
    (6 channels: scaled z_x, z_y, z_xx, z_xy, z_yx, z_yy).
    """

    kind: str
    values: np.ndarray  # (H, W, C)
    mask: np.ndarray    # (H, W) bool

    def __post_init__(self):
        if self.kind not in ("gbr", "trsc"):
            raise ConfigError(f"kind must be 'gbr' or 'trsc', got {self.kind!r}")
        want = 3 if self.kind == "gbr" else 6
        if self.values.ndim != 3 or self.values.shape[2] != want:
            raise SizeError(f"{self.kind} field needs {want} channels, got shape {self.values.shape}")
        if self.mask.shape != self.values.shape[:2]:
            raise SizeError("mask and values disagree on frame shape")


def iota(j: SecondOrderJet, eps_rel: float = DEFAULT_EPS_REL) -> InvariantField:
    """Unit-Frobenius-normalized Hessian; invariant under the full group."""
    mask, norm = _validity(j, eps_rel)
    safe = np.where(mask, norm, 1.0)
    values = np.stack([j.zxx, j.zxy, j.zyy], axis=2) / safe[:, :, None]
    values[~mask] = 0.0
    return InvariantField(kind="gbr", values=values, mask=mask)


def eta(j: SecondOrderJet, eps_rel: float = DEFAULT_EPS_REL) -> InvariantField:
    """Gradient and Hessian scaled by the Hessian norm; stretch/offset invariant."""
    mask, norm = _validity(j, eps_rel)
    safe = np.where(mask, norm, 1.0)
    values = np.stack([j.zx, j.zy, j.zxx, j.zxy, j.zxy, j.zyy], axis=2) / safe[:, :, None]
    values[~mask] = 0.0
    return InvariantField(kind="trsc", values=values, mask=mask)


def moving_frame(j: SecondOrderJet, pixel: tuple[int, int],
                 eps_rel: float = DEFAULT_EPS_REL) -> GbrParams:
    """The group element that normalizes the jet at one pixel.

    Applying the returned element to the frame gives z~ = 0, z~_x = 0,
    z~_y = 0 at the pixel and unit Hessian Frobenius norm there.  Raises on
    pixels where the Hessian is degenerate (the frame is not defined there).
    """
    mask, norm = _validity(j, eps_rel)
    row, col = pixel
    if not (0 <= row < j.shape[0] and 0 <= col < j.shape[1]):
        raise SizeError(f"pixel {pixel} outside frame {j.shape}")
    if not mask[row, col]:
        raise DegenerateInputError(f"degenerate Hessian at pixel {pixel}; no normalization exists")
    f = norm[row, col]
    alpha = -j.zx[row, col] / f
    beta = -j.zy[row, col] / f
    lam = 1.0 / f
    x, y = pixel_grid(j.shape[1], j.shape[0])
    tau = -(alpha * x[row, col] + beta * y[row, col] + lam * j.z[row, col])
    return GbrParams(alpha=alpha, beta=beta, lam=lam, tau=tau)


# ---------------------------------------------------------------------------
# Least-squares alignment between depth frames.
#
# Inputs may be single frames (H, W) or stacks (T, H, W); for stacks the
# pixel coordinates repeat per frame, i.e. the fit chooses one transform
# for the whole stack.

def _design(src: np.ndarray, dst: np.ndarray, mask: np.ndarray | None, mode: str):
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim not in (2, 3):
        raise SizeError(f"src/dst must be matching frames or stacks, got {src.shape} and {dst.shape}")
    if mask is None:
        mask = np.ones(src.shape, dtype=bool)
    elif mask.shape != src.shape:
        raise SizeError(f"mask shape {mask.shape} does not match {src.shape}")
    x, y = pixel_grid(src.shape[-1], src.shape[-2])
    x = np.broadcast_to(x, src.shape)
    y = np.broadcast_to(y, src.shape)
    s = src[mask]
    if mode == "gbr":
        cols = [x[mask], y[mask], s, np.ones_like(s)]
        names = ("x", "y", "src", "1")
    elif mode == "trsc":
        cols = [s, np.ones_like(s)]
        names = ("src", "1")
    else:
        raise ConfigError(f"mode must be 'gbr' or 'trsc', got {mode!r}")
    return np.stack(cols, axis=1), dst[mask], names


def fit_linear_alignment(src: np.ndarray, dst: np.ndarray,
                         mask: np.ndarray | None = None, mode: str = "gbr",
                         require_full_rank: bool = False) -> tuple[float, float, float, float]:
    """Least-squares (alpha, beta, lambda, tau) mapping src toward dst.

    Mode "gbr" fits all four parameters, mode "trsc" fixes alpha = beta = 0.
    Rank-deficient systems return the minimum-norm solution by default,
    which keeps the fit defined for constant or planar sources; with
    ``require_full_rank`` they raise FitError naming the dependent column.
    """
    design, target, names = _design(src, dst, mask, mode)
    if len(target) < 2:
        raise FitError(f"alignment needs at least 2 pixels, got {len(target)}")
    if require_full_rank:
        rank = np.linalg.matrix_rank(design)
        if rank < design.shape[1]:
            _, _, vt = np.linalg.svd(design, full_matrices=False)
            worst = names[int(np.argmax(np.abs(vt[-1])))]
            raise FitError(f"rank-deficient fit (rank {rank} of {design.shape[1]}); "
                           f"dependent direction dominated by column {worst!r}")
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    if mode == "trsc":
        return (0.0, 0.0, float(coef[0]), float(coef[1]))
    return tuple(float(c) for c in coef)


def gbr_fit(src: np.ndarray, dst: np.ndarray, mask: np.ndarray | None = None,
            mode: str = "gbr") -> GbrParams:
    """Fit a group element mapping src onto dst over the masked pixels.

    Raises FitError when the design is rank deficient (naming the dependent
    direction) or when the optimum leaves the group (lambda <= 0).
    """
    count = int(np.sum(mask)) if mask is not None else int(np.asarray(src).size)
    if count < 4:
        raise FitError(f"fit needs at least 4 pixels, got {count}")
    coef = fit_linear_alignment(src, dst, mask, mode, require_full_rank=True)
    if coef[2] <= 0:
        raise FitError(f"fit left the group: lambda = {coef[2]:.6g} <= 0")
    return GbrParams(alpha=coef[0], beta=coef[1], lam=coef[2], tau=coef[3])


def apply_alignment(src: np.ndarray, coef: tuple[float, float, float, float]) -> np.ndarray:
    """Apply alignment coefficients to a frame (H, W) or stack (T, H, W)."""
    alpha, beta, lam, tau = coef
    src = np.asarray(src, dtype=np.float64)
    x, y = pixel_grid(src.shape[-1], src.shape[-2])
    return alpha * x + beta * y + lam * src + tau
