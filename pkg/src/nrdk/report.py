"""Figures and delimited summaries for datasets and training runs.

Everything renders through the Agg backend straight to files; nothing here
opens a display.  Numeric summaries are written as CSV or JSONL next to the
figures so runs can be compared without re-reading binaries.

Depth frames are shown with a per-frame min/max stretch because the gauge
(and with it the absolute scale) of a depth estimate is arbitrary; every
helper that stretches says so in the file it writes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .errors import DataFormatError

__all__ = [
    "normalize_frame",
    "save_frame_png",
    "save_clip_preview",
    "save_depth_comparison",
    "save_training_curves",
    "write_csv",
    "read_jsonl",
]


def normalize_frame(frame: np.ndarray) -> np.ndarray:
    """Stretch one frame to [0, 1] for display; constant frames map to 0."""
    frame = np.asarray(frame, dtype=np.float64)
    lo = float(frame.min())
    hi = float(frame.max())
    if hi - lo <= 0.0:
        return np.zeros_like(frame)
    return (frame - lo) / (hi - lo)


def save_frame_png(frame: np.ndarray, path: str | Path, *,
                   normalized: bool = False) -> Path:
    """Write a single frame as an 8-bit grayscale PNG.

    With ``normalized`` the frame is stretched per frame and the PNG text
    metadata records that, so a preview is never mistaken for calibrated
    values; otherwise values are clipped to [0, 1].
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3 and frame.shape[2] == 1:
        frame = frame[:, :, 0]
    if frame.ndim != 2:
        raise DataFormatError(f"preview frames must be 2D, got shape {frame.shape}")
    if normalized:
        frame = normalize_frame(frame)
        note = "per-frame min/max stretch"
    else:
        frame = np.clip(frame, 0.0, 1.0)
        note = "clipped to [0, 1]"
    data = np.round(frame * 255.0).astype(np.uint8)
    meta = PngInfo()
    meta.add_text("nrdk:scale", note)
    path = Path(path)
    Image.fromarray(data, mode="L").save(path, pnginfo=meta)
    return path


def _frame_indices(frames: int, count: int) -> np.ndarray:
    count = max(1, min(count, frames))
    return np.unique(np.round(np.linspace(0, frames - 1, count)).astype(int))


def save_clip_preview(gray: np.ndarray, depth: np.ndarray, path: str | Path,
                      *, count: int = 6, title: str | None = None) -> Path:
    """One figure: a row of grayscale frames over a row of depth frames."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim == 4 and gray.shape[3] == 1:
        gray = gray[..., 0]
    depth = np.asarray(depth, dtype=np.float64)
    picks = _frame_indices(gray.shape[0], count)
    fig, axes = plt.subplots(2, len(picks), figsize=(1.6 * len(picks), 3.4),
                             squeeze=False)
    for col, t in enumerate(picks):
        axes[0][col].imshow(np.clip(gray[t], 0.0, 1.0), cmap="gray",
                            vmin=0.0, vmax=1.0)
        axes[0][col].set_title(f"t={t}", fontsize=8)
        axes[1][col].imshow(normalize_frame(depth[min(t, depth.shape[0] - 1)]),
                            cmap="viridis", vmin=0.0, vmax=1.0)
        for row in (0, 1):
            axes[row][col].set_xticks([])
            axes[row][col].set_yticks([])
    axes[0][0].set_ylabel("gray", fontsize=8)
    axes[1][0].set_ylabel("depth", fontsize=8)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_depth_comparison(truth: np.ndarray, pred: np.ndarray,
                          path: str | Path, *, count: int = 6,
                          title: str | None = None) -> Path:
    """Truth, prediction and absolute difference, a few frames of each.

    Truth and prediction each get their own per-frame stretch (their gauges
    differ); the difference row is computed after stretching both, so it
    shows structure, not calibrated error.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    picks = _frame_indices(truth.shape[0], count)
    fig, axes = plt.subplots(3, len(picks), figsize=(1.6 * len(picks), 5.0),
                             squeeze=False)
    for col, t in enumerate(picks):
        a = normalize_frame(truth[t])
        b = normalize_frame(pred[min(t, pred.shape[0] - 1)])
        axes[0][col].imshow(a, cmap="viridis", vmin=0.0, vmax=1.0)
        axes[0][col].set_title(f"t={t}", fontsize=8)
        axes[1][col].imshow(b, cmap="viridis", vmin=0.0, vmax=1.0)
        if a.shape == b.shape:
            axes[2][col].imshow(np.abs(a - b), cmap="magma", vmin=0.0, vmax=1.0)
        for row in (0, 1, 2):
            axes[row][col].set_xticks([])
            axes[row][col].set_yticks([])
    axes[0][0].set_ylabel("truth", fontsize=8)
    axes[1][0].set_ylabel("estimate", fontsize=8)
    axes[2][0].set_ylabel("|diff|", fontsize=8)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_training_curves(records: list[dict], path: str | Path, *,
                         title: str | None = None) -> Path:
    """Training and validation loss against the epoch counter."""
    epochs_t = [r["epoch"] for r in records if r.get("train_loss") is not None]
    train = [r["train_loss"] for r in records if r.get("train_loss") is not None]
    epochs_v = [r["epoch"] for r in records if r.get("val_loss") is not None]
    val = [r["val_loss"] for r in records if r.get("val_loss") is not None]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if train:
        ax.plot(epochs_t, train, marker="o", markersize=3, label="train")
    if val:
        ax.plot(epochs_v, val, marker="s", markersize=3, label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if (not train or min(train) > 0) and (not val or min(val) > 0):
        ax.set_yscale("log")
    ax.legend()
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> Path:
    """Write rows with a header line; floats are repr'd by csv as-is."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    """Read a JSONL file, naming the offending line on parse errors."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: bad JSONL at line {lineno}: {exc}") from exc
    return records
