"""Full-frame depth reconstruction by overlap-add of aligned patch estimates.

The estimator answers only for 64x64x16 windows at half spatial resolution
and only up to a relief transform per window.  Reconstruction therefore:

1. builds a coarse layer: the whole frame downsized to the patch input
   size, run through the estimator, and bilinearly upsampled to the working
   resolution (half the input).  The coarse layer is the canonical gauge;
   absolute scale stays unrecoverable, everything is expressed relative to
   this layer's relief frame;
2. runs the estimator on every 64x64x16 tile (50% overlap in space, 50% in
   time, borders clamped), giving 32x32x16 working-resolution estimates;
3. least-squares-fits a relief transform from each estimate to the coarse
   layer over its tile (full 4-parameter fit, falling back to stretch and
   offset, then to identity, when the system is rank deficient);
4. accumulates the aligned estimates under separable triangle windows and
   normalizes by the accumulated window weight (overlap-add).  The interior
   window sum is constant by construction; normalizing also handles frame
   borders and clamped tiles exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import VideoTensor, bilinear_resize
from .errors import FitError, SizeError
from .invariants import apply_alignment, fit_linear_alignment
from .net import DepthNet
from .training import predict_clip

WINDOW = 64
HOP = 32
T_WINDOW = 16
T_HOP = 8


def cola_window(n: int) -> np.ndarray:
    """Half-sample-offset triangle of length n; shifts by n/2 sum to 1 exactly."""
    if n < 2 or n % 2:
        raise SizeError(f"window length must be even and >= 2, got {n}")
    half = n // 2
    k = np.arange(n, dtype=np.float64)
    up = (k + 0.5) / half
    down = (n - k - 0.5) / half
    return np.minimum(up, down)


def _origins(extent: int, window: int, hop: int) -> list[int]:
    """Tile origins: regular hops, with the last tile clamped to the border."""
    if extent < window:
        raise SizeError(f"extent {extent} smaller than window {window}")
    out = list(range(0, extent - window + 1, hop))
    if out[-1] != extent - window:
        out.append(extent - window)
    return out


@dataclass(frozen=True)
class TilingPlan:
    """Tile layout for one video, in input-resolution coordinates."""

    frame_w: int
    frame_h: int
    frames: int
    window: int = WINDOW
    hop: int = HOP
    t_window: int = T_WINDOW
    t_hop: int = T_HOP
    origins: list[tuple[int, int]] = field(default_factory=list)   # (row, col)
    t_origins: list[int] = field(default_factory=list)

    @property
    def tiles(self) -> list[tuple[int, int, int]]:
        """(t0, row0, col0) for every spatio-temporal tile."""
        return [(t0, r0, c0) for t0 in self.t_origins for (r0, c0) in self.origins]


def plan_tiling(frame_w: int, frame_h: int, frames: int, window: int = WINDOW,
                hop: int = HOP, t_window: int = T_WINDOW, t_hop: int = T_HOP) -> TilingPlan:
    """Lay out 50%-overlap tiles covering the video; borders clamp."""
    if frames < t_window:
        raise SizeError(f"video has {frames} frames; the temporal window needs {t_window}")
    if frame_w < window or frame_h < window:
        raise SizeError(f"frame {frame_w}x{frame_h} smaller than the {window}px window")
    rows = _origins(frame_h, window, hop)
    cols = _origins(frame_w, window, hop)
    return TilingPlan(
        frame_w=frame_w, frame_h=frame_h, frames=frames,
        window=window, hop=hop, t_window=t_window, t_hop=t_hop,
        origins=[(r, c) for r in rows for c in cols],
        t_origins=_origins(frames, t_window, t_hop),
    )


def _align_tile(patch: np.ndarray, coarse_tile: np.ndarray) -> tuple[np.ndarray, str]:
    """Align one patch estimate to the coarse gauge.

    All frames of the tile share a single fit (the estimate carries one
    gauge choice for the whole tile), with pixel coordinates local to the
    tile.  The fit is an unconstrained least squares, so a sign-flipped
    estimate still aligns; rank deficiency falls back from the full relief
    fit to stretch/offset, then to identity.
    """
    for mode in ("gbr", "trsc"):
        try:
            coef = fit_linear_alignment(patch, coarse_tile, mode=mode,
                                        require_full_rank=True)
        except FitError:
            continue
        return apply_alignment(patch, coef), mode
    return patch.copy(), "identity"


def stitch(patches: dict[tuple[int, int, int], np.ndarray], coarse: np.ndarray,
           plan: TilingPlan) -> np.ndarray:
    """Overlap-add aligned patch estimates into a working-resolution video.

    ``patches`` maps (t0, row0, col0) in input coordinates to (t_window,
    window/2, window/2) estimates; ``coarse`` is the gauge video at working
    resolution (frames, frame_h/2, frame_w/2).
    """
    ww = plan.window // 2
    hw, hh = plan.frame_w // 2, plan.frame_h // 2
    if coarse.shape != (plan.frames, hh, hw):
        raise SizeError(f"coarse layer must be {(plan.frames, hh, hw)}, got {coarse.shape}")
    missing = [key for key in plan.tiles if key not in patches]
    if missing:
        raise SizeError(f"missing patch estimates for tiles {missing[:4]}"
                        + ("..." if len(missing) > 4 else ""))
    win2d = np.outer(cola_window(ww), cola_window(ww))
    win_t = cola_window(plan.t_window)
    acc = np.zeros((plan.frames, hh, hw))
    weight = np.zeros((plan.frames, hh, hw))
    for (t0, r0, c0) in plan.tiles:
        patch = np.asarray(patches[(t0, r0, c0)], dtype=np.float64)
        if patch.shape != (plan.t_window, ww, ww):
            raise SizeError(f"patch at {(t0, r0, c0)} has shape {patch.shape}, "
                            f"expected {(plan.t_window, ww, ww)}")
        r, c = r0 // 2, c0 // 2
        coarse_tile = coarse[t0:t0 + plan.t_window, r:r + ww, c:c + ww]
        aligned, _ = _align_tile(patch, coarse_tile)
        w3 = win_t[:, None, None] * win2d[None]
        acc[t0:t0 + plan.t_window, r:r + ww, c:c + ww] += aligned * w3
        weight[t0:t0 + plan.t_window, r:r + ww, c:c + ww] += w3
    if (weight <= 0).any():
        raise SizeError("tiling left uncovered pixels; plan and patches disagree")
    return acc / weight


def reconstruct_video(video: VideoTensor, net: DepthNet, *,
                      upsample: bool = False) -> VideoTensor:
    """Depth for an arbitrary-size grayscale video via tiled prediction.

    Returns the working-resolution (half-size) depth video, optionally
    bilinearly upsampled back to the input size.  A 64x64x16 input
    degenerates to a single tile aligned to itself, i.e. the plain network
    output.
    """
    if video.channels != 1:
        raise SizeError(f"reconstruction expects a grayscale video, got {video.channels} channels")
    c = net.config
    frames = video.frames
    plan = plan_tiling(video.width, video.height, frames,
                       window=c.width, hop=c.width // 2,
                       t_window=c.frames, t_hop=c.frames // 2)
    gray = video.planes()

    # Coarse layer: the whole frame squeezed through the estimator.
    small = bilinear_resize(gray, c.height, c.width)
    coarse_parts = {}
    for t0 in plan.t_origins:
        pred = predict_clip(net, VideoTensor(small[t0:t0 + c.frames][..., None]))
        coarse_parts[t0] = pred.planes()
    coarse_small = _temporal_overlap_add(coarse_parts, plan)
    coarse = bilinear_resize(coarse_small, video.height // 2, video.width // 2)

    patches = {}
    for (t0, r0, c0) in plan.tiles:
        tile = gray[t0:t0 + c.frames, r0:r0 + c.height, c0:c0 + c.width]
        pred = predict_clip(net, VideoTensor(tile[..., None]))
        patches[(t0, r0, c0)] = pred.planes()
    out = stitch(patches, coarse, plan)
    if upsample:
        out = bilinear_resize(out, video.height, video.width)
    return VideoTensor(out[..., None])


def _temporal_overlap_add(parts: dict[int, np.ndarray], plan: TilingPlan) -> np.ndarray:
    """Overlap-add the coarse predictions along time only."""
    sample = next(iter(parts.values()))
    t_window = sample.shape[0]
    acc = np.zeros((plan.frames, sample.shape[1], sample.shape[2]))
    weight = np.zeros(plan.frames)
    win = cola_window(t_window)
    for t0, chunk in parts.items():
        acc[t0:t0 + t_window] += chunk * win[:, None, None]
        weight[t0:t0 + t_window] += win
    return acc / weight[:, None, None]
