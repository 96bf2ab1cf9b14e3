"""Invariant training losses with analytic gradients, and the evaluation metric.

Both losses compare invariant fields of a predicted depth video against the
target's, as mean squared error over the pixels where both fields are valid,
normalized per frame by that frame's valid-pixel count; frames contribute
equally and frames with no valid pixels are skipped.  Channel counting
treats the Hessian as its full 2x2 entry set, so the mixed derivative is
weighted twice in the 3-channel field and appears twice in the 6-channel
one.

Gradients are computed analytically by backpropagating through the
normalized-field quotient and the difference stencils' adjoints.  Validity
masks and the per-frame median threshold are treated as locally constant,
the standard subgradient choice for threshold rules; as a consequence the
gradient is exactly zero at pixels whose stencil neighborhood contains no
jointly-valid pixel.

The evaluation metric is mean absolute error scaled by the target frame's
standard deviation (MAE-SN), optionally after aligning the prediction to
the target with a least-squares relief transform, per frame or with the
first frame's alignment reused for the whole clip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError, MetricError, SizeError
from .invariants import (
    DEFAULT_EPS_REL,
    SecondOrderJet,
    _validity,
    apply_alignment,
    d_x_adj,
    d_xx_adj,
    d_xy_adj,
    d_y_adj,
    d_yy_adj,
    fit_linear_alignment,
    hessian_norm,
    jet,
)

__all__ = ["LossValue", "loss_gbr", "loss_trsc", "MetricReport", "mae_sn"]


@dataclass(frozen=True)
class LossValue:
    """Loss scalar, its gradient w.r.t. the predicted video, and mask size."""

    value: float
    gradient: np.ndarray  # same (T, H, W) shape as the prediction
    valid_count: int      # jointly valid pixels summed over frames


def _check_videos(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 3 or pred.shape != truth.shape:
        raise SizeError(f"pred/truth must be matching (T, H, W), got {pred.shape} and {truth.shape}")
    return pred, truth


def _frame_terms_gbr(jp: SecondOrderJet, jt: SecondOrderJet, eps_rel: float):
    """Per-frame loss and gradient for the fully invariant field."""
    mask_p, norm_p = _validity(jp, eps_rel)
    mask_t, _ = _validity(jt, eps_rel)
    m = mask_p & mask_t
    n = int(m.sum())
    if n == 0:
        return None
    fp = np.where(m, norm_p, 1.0)
    ft = np.where(m, hessian_norm(jt), 1.0)
    # Four-entry Hessian views; the mixed entry appears twice.
    hp = np.stack([jp.zxx, jp.zxy, jp.zxy, jp.zyy])
    ip = hp / fp
    it = np.stack([jt.zxx, jt.zxy, jt.zxy, jt.zyy]) / ft
    diff = np.where(m, ip - it, 0.0)
    loss = float((diff**2).sum() / (4.0 * n))

    # d loss / d iota, then through iota = h / |h|: g/F - (g . iota) iota / F.
    g = diff / (2.0 * n)
    gdot = (g * ip).sum(axis=0)
    gh = np.where(m, (g - gdot[None] * ip) / fp, 0.0)
    grad = (
        d_xx_adj(gh[0], jp.hx)
        + d_xy_adj(gh[1] + gh[2], jp.hx, jp.hy)
        + d_yy_adj(gh[3], jp.hy)
    )
    return loss, grad, n


def _frame_terms_trsc(jp: SecondOrderJet, jt: SecondOrderJet, eps_rel: float):
    """Per-frame loss and gradient for the stretch/offset-invariant field."""
    mask_p, norm_p = _validity(jp, eps_rel)
    mask_t, _ = _validity(jt, eps_rel)
    m = mask_p & mask_t
    n = int(m.sum())
    if n == 0:
        return None
    fp = np.where(m, norm_p, 1.0)
    ft = np.where(m, hessian_norm(jt), 1.0)
    ap = np.stack([jp.zx, jp.zy, jp.zxx, jp.zxy, jp.zxy, jp.zyy])
    ep = ap / fp
    et = np.stack([jt.zx, jt.zy, jt.zxx, jt.zxy, jt.zxy, jt.zyy]) / ft
    diff = np.where(m, ep - et, 0.0)
    loss = float((diff**2).sum() / (6.0 * n))

    g = diff / (3.0 * n)
    # Gradient entries divide by F directly; Hessian entries also carry the
    # quotient term through F, which depends on the Hessian alone.
    gdot = (g * ep).sum(axis=0)           # over all six components
    iota4 = ap[2:] / fp                    # four-entry normalized Hessian
    gh = np.where(m, (g[2:] - gdot[None] * iota4) / fp, 0.0)
    gg = np.where(m, g[:2] / fp, 0.0)
    grad = (
        d_x_adj(gg[0], jp.hx)
        + d_y_adj(gg[1], jp.hy)
        + d_xx_adj(gh[0], jp.hx)
        + d_xy_adj(gh[1] + gh[2], jp.hx, jp.hy)
        + d_yy_adj(gh[3], jp.hy)
    )
    return loss, grad, n


def _loss(pred: np.ndarray, truth: np.ndarray, frame_terms, eps_rel: float) -> LossValue:
    pred, truth = _check_videos(pred, truth)
    losses = []
    grads = np.zeros_like(pred)
    total = 0
    contributing = []
    for t in range(pred.shape[0]):
        terms = frame_terms(jet(pred[t]), jet(truth[t]), eps_rel)
        if terms is None:
            continue
        loss_t, grad_t, n = terms
        losses.append(loss_t)
        grads[t] = grad_t
        contributing.append(t)
        total += n
    if not losses:
        raise DegenerateInputError("every pixel of every frame is masked out; loss undefined")
    k = len(losses)
    grads[contributing] /= k
    return LossValue(value=float(np.mean(losses)), gradient=grads, valid_count=total)


def loss_gbr(pred: np.ndarray, truth: np.ndarray,
             eps_rel: float = DEFAULT_EPS_REL) -> LossValue:
    """MSE between the fully relief-invariant fields of pred and truth."""
    return _loss(pred, truth, _frame_terms_gbr, eps_rel)


def loss_trsc(pred: np.ndarray, truth: np.ndarray,
              eps_rel: float = DEFAULT_EPS_REL) -> LossValue:
    """MSE between the stretch/offset-invariant fields of pred and truth."""
    return _loss(pred, truth, _frame_terms_trsc, eps_rel)


# ---------------------------------------------------------------------------
# Evaluation metric.

ALIGN_MODES = ("per-frame", "first-frame", "none")
ALIGN_GROUPS = ("gbr", "trsc")


@dataclass(frozen=True)
class MetricReport:
    """MAE-SN value with its per-frame breakdown and alignments used."""

    mae_sn: float
    per_frame: list[float] = field(default_factory=list)
    alignments: list[tuple[float, float, float, float]] = field(default_factory=list)
    align: str = "per-frame"
    group: str = "gbr"


def mae_sn(pred: np.ndarray, truth: np.ndarray, align: str = "per-frame",
           group: str = "gbr", mask: np.ndarray | None = None) -> MetricReport:
    """Sigma-normalized mean absolute error between depth videos.

    Per frame: MAE between the (optionally aligned) prediction and the
    target, divided by the target frame's standard deviation; the report
    averages frames.  Alignment is an unconstrained least-squares relief
    fit of the prediction onto the target ("gbr" all four parameters,
    "trsc" stretch and offset only), estimated per frame or once on the
    first frame.  A zero-variance target frame leaves the metric undefined.
    """
    if align not in ALIGN_MODES:
        raise ConfigError(f"align must be one of {ALIGN_MODES}, got {align!r}")
    if group not in ALIGN_GROUPS:
        raise ConfigError(f"group must be one of {ALIGN_GROUPS}, got {group!r}")
    pred, truth = _check_videos(pred, truth)
    frames = pred.shape[0]
    if mask is not None and mask.shape != pred.shape:
        raise SizeError(f"mask shape {mask.shape} does not match video {pred.shape}")

    identity = (0.0, 0.0, 1.0, 0.0)
    first_coef = None
    per_frame = []
    alignments = []
    for t in range(frames):
        m = mask[t] if mask is not None else np.ones(pred[t].shape, dtype=bool)
        if not m.any():
            raise MetricError(f"frame {t}: no pixels to evaluate")
        sigma = float(truth[t][m].std())
        if sigma == 0.0:
            raise MetricError(f"frame {t}: zero-variance target; MAE-SN undefined")
        if align == "none":
            coef = identity
        elif align == "per-frame" or (align == "first-frame" and t == 0):
            coef = fit_linear_alignment(pred[t], truth[t], m, mode=group)
            if align == "first-frame":
                first_coef = coef
        else:
            coef = first_coef
        aligned = apply_alignment(pred[t], coef)
        mae = float(np.abs(aligned - truth[t])[m].mean())
        per_frame.append(mae / sigma)
        alignments.append(tuple(coef))
    return MetricReport(
        mae_sn=float(np.mean(per_frame)),
        per_frame=per_frame,
        alignments=alignments,
        align=align,
        group=group,
    )
