"""Training loop, checkpoints, and predictors for the patch estimator.

The invariant losses and their gradients live in numpy (see losses); a thin
autograd bridge feeds the analytic gradient back into torch, keeping a
single implementation of the loss math.  Optimization is Adam.  Splits are
deterministic 80/10/10 by seeded shuffle.  Checkpoints are a versioned
binary: a JSON header with the architecture and a shape registry, followed
by one flat little-endian float64 parameter vector in registry order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import VideoTensor, average_pool_2x, grayscale
from .dataset import dataset_read
from .errors import ConfigError, DataFormatError, DivergenceError, SizeError
from .losses import loss_gbr, loss_trsc
from .net import DepthNet, NetConfig, build_net
from .rng import SeededRng

LOSS_KINDS = ("gbr", "trsc")
CKPT_MAGIC = b"NRDKCKPT"
CKPT_VERSION = 1


def loss_fn(kind: str):
    if kind not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {kind!r}")
    return loss_gbr if kind == "gbr" else loss_trsc


class _InvariantLoss(torch.autograd.Function):
    """Numpy loss bridged into torch with its analytic gradient."""

    @staticmethod
    def forward(ctx, pred: torch.Tensor, truth: np.ndarray, kind: str):
        fn = loss_fn(kind)
        if not torch.isfinite(pred).all():
            raise DivergenceError("non-finite prediction; training diverged")
        pred_np = pred.detach().cpu().numpy().astype(np.float64)
        batch = pred_np.shape[0]
        total = 0.0
        grads = np.zeros_like(pred_np)
        for b in range(batch):
            lv = fn(pred_np[b, 0], truth[b])
            total += lv.value
            grads[b, 0] = lv.gradient
        ctx.saved_grad = torch.from_numpy(grads / batch).to(pred.dtype)
        return torch.tensor(total / batch, dtype=pred.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        return grad_out * ctx.saved_grad, None, None


def invariant_loss(pred: torch.Tensor, truth: np.ndarray, kind: str) -> torch.Tensor:
    """Mean invariant loss over a batch; truth is (B, T, H, W) numpy float64."""
    return _InvariantLoss.apply(pred, truth, kind)


def backward(net: DepthNet, clips: torch.Tensor, truth: np.ndarray,
             kind: str) -> dict[str, torch.Tensor]:
    """One forward/backward pass; returns gradients by parameter name.

    Raises DivergenceError naming the first parameter whose gradient is
    non-finite.  Frozen parameters report zero gradients.
    """
    net.zero_grad(set_to_none=True)
    loss = invariant_loss(net(clips), truth, kind)
    loss.backward()
    grads = {}
    for name, p in net.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# Data plumbing.

def clip_to_pair(clip) -> tuple[np.ndarray, np.ndarray]:
    """(grayscale input video, half-resolution target depth) for one clip."""
    gray = grayscale(clip.render).planes()            # (T, H, W)
    depth = average_pool_2x(clip.depth.planes())      # (T, H/2, W/2)
    return gray, depth


def load_pairs(data_dir: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """All (input, target) pairs of a dataset as two stacked arrays."""
    grays, depths = [], []
    for clip in dataset_read(data_dir):
        g, d = clip_to_pair(clip)
        grays.append(g.astype(np.float32))
        depths.append(d)
    if not grays:
        raise DataFormatError(f"dataset at {data_dir} holds no clips")
    return np.stack(grays), np.stack(depths)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic 80/10/10 split; rounding leftovers go to the test split."""
    if n < 3:
        raise SizeError(f"need at least 3 clips to split, got {n}")
    order = SeededRng(seed).stream("split").permutation(n)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    if n_val == 0:
        n_train, n_val = n - 2, 1
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


# ---------------------------------------------------------------------------
# Checkpoints.

def checkpoint_save(path: str | Path, net: DepthNet, meta: dict | None = None) -> None:
    """Versioned binary: JSON header (config, shape registry) + flat f64 vector."""
    registry = [{"name": n, "shape": list(p.shape)} for n, p in net.named_parameters()]
    header = {
        "version": CKPT_VERSION,
        "net": net.config.to_dict(),
        "registry": registry,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    flat = np.concatenate([
        p.detach().cpu().numpy().astype("<f8").ravel() for _, p in net.named_parameters()
    ]) if registry else np.zeros(0, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HHI", CKPT_VERSION, 0, len(blob)))
        fh.write(blob)
        fh.write(flat.astype("<f8").tobytes())


def checkpoint_load(path: str | Path) -> tuple[DepthNet, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CKPT_MAGIC:
            raise DataFormatError(f"{path}: bad magic; not a checkpoint")
        version, _, blob_len = struct.unpack("<HHI", fh.read(8))
        if version != CKPT_VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(fh.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: corrupt checkpoint header ({exc})") from exc
        config = NetConfig.from_dict(header["net"])
        net = DepthNet(config)
        expect = [(n, tuple(p.shape)) for n, p in net.named_parameters()]
        stored = [(e["name"], tuple(e["shape"])) for e in header["registry"]]
        if expect != stored:
            raise DataFormatError(f"{path}: shape registry does not match the architecture")
        total = sum(int(np.prod(s)) for _, s in stored)
        raw = fh.read(8 * total)
        if len(raw) != 8 * total:
            raise DataFormatError(f"{path}: truncated parameter vector")
        flat = np.frombuffer(raw, dtype="<f8")
    pos = 0
    with torch.no_grad():
        for (_, shape), (_, p) in zip(stored, net.named_parameters()):
            n = int(np.prod(shape))
            p.copy_(torch.from_numpy(flat[pos:pos + n].reshape(shape).copy()).to(p.dtype))
            pos += n
    return net, header["meta"]


# ---------------------------------------------------------------------------
# Training.

@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    final_lr_scale: float = 1.0  # cosine-anneal to lr * this; 1.0 keeps lr constant

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1:
            raise ConfigError(f"bad optimizer config: lr={self.lr}, batch_size={self.batch_size}")
        if not 0.0 < self.final_lr_scale <= 1.0:
            raise ConfigError(f"final_lr_scale must be in (0, 1], got {self.final_lr_scale}")

    def lr_at(self, epoch: int, epochs: int) -> float:
        """Learning rate for a 1-based epoch under cosine annealing."""
        if self.final_lr_scale == 1.0 or epochs <= 1:
            return self.lr
        frac = 0.5 * (1.0 + math.cos(math.pi * (epoch - 1) / (epochs - 1)))
        return self.lr * (self.final_lr_scale + (1.0 - self.final_lr_scale) * frac)


@dataclass
class TrainState:
    """What training leaves behind."""

    net: DepthNet
    history: list[dict] = field(default_factory=list)
    best_val: float = float("inf")
    best_epoch: int = -1
    seed: int = 0
    loss_kind: str = "gbr"


def _epoch_pass(net, opt, gray, depth, indices, kind, batch_size, rng, train: bool):
    """Mean loss over one pass; shuffles and steps when training."""
    order = rng.permutation(len(indices)) if train else np.arange(len(indices))
    total, count = 0.0, 0
    dtype = net.config.torch_dtype
    for start in range(0, len(order), batch_size):
        idx = indices[order[start:start + batch_size]]
        x = torch.from_numpy(gray[idx][:, None]).to(dtype)
        y = depth[idx]
        if train:
            opt.zero_grad(set_to_none=True)
            loss = invariant_loss(net(x), y, kind)
            loss.backward()
            for name, p in net.named_parameters():
                if p.grad is not None and not torch.isfinite(p.grad).all():
                    raise DivergenceError(f"non-finite gradient in parameter {name!r}")
            opt.step()
        else:
            with torch.no_grad():
                loss = invariant_loss(net(x), y, kind)
        value = float(loss.detach())
        if not np.isfinite(value):
            raise DivergenceError(f"loss diverged to {value}")
        total += value * len(idx)
        count += len(idx)
    return total / max(count, 1)


def train(data_dir: str | Path, net_config: NetConfig, opt_config: OptimizerConfig,
          epochs: int, seed: int, loss_kind: str, out_dir: str | Path | None = None,
          pairs: tuple[np.ndarray, np.ndarray] | None = None,
          log_fh=None) -> TrainState:
    """Train a fresh network; keeps the best-validation checkpoint.

    ``pairs`` can carry preloaded (gray, depth) stacks to skip re-reading
    the dataset.  The JSONL log contains only deterministic fields, so two
    runs with the same seed and single-threaded torch produce identical
    logs and checkpoints.
    """
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {loss_kind!r}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    gray, depth = pairs if pairs is not None else load_pairs(data_dir)
    if gray.shape[1:] != (net_config.frames, net_config.height, net_config.width):
        raise SizeError(f"dataset clips {gray.shape[1:]} do not match net input "
                        f"{(net_config.frames, net_config.height, net_config.width)}")
    train_idx, val_idx, _ = split_indices(len(gray), seed)

    root = SeededRng(seed)
    torch.manual_seed(root.integer("torch"))
    net = build_net(net_config, seed=root.integer("init"))
    opt = torch.optim.Adam(net.parameters(), lr=opt_config.lr, betas=opt_config.betas)
    state = TrainState(net=net, seed=seed, loss_kind=loss_kind)
    shuffle_rng = root.stream("shuffle")

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "checkpoint_best.bin" if out_dir is not None else None

    # Epoch 0 is the untrained network, so later entries can be read as a
    # drop from initialization on both splits.
    init_train = _epoch_pass(net, opt, gray, depth, train_idx, loss_kind,
                             opt_config.batch_size, shuffle_rng, train=False)
    init_val = _epoch_pass(net, opt, gray, depth, val_idx, loss_kind,
                           opt_config.batch_size, shuffle_rng, train=False)
    record = {"epoch": 0, "train_loss": init_train, "val_loss": init_val}
    state.history.append(record)
    if log_fh is not None:
        log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    for epoch in range(1, epochs + 1):
        lr = opt_config.lr_at(epoch, epochs)
        for grp in opt.param_groups:
            grp["lr"] = lr
        train_loss = _epoch_pass(net, opt, gray, depth, train_idx, loss_kind,
                                 opt_config.batch_size, shuffle_rng, train=True)
        val_loss = _epoch_pass(net, opt, gray, depth, val_idx, loss_kind,
                               opt_config.batch_size, shuffle_rng, train=False)
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss}
        state.history.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()
        if val_loss < state.best_val:
            state.best_val = val_loss
            state.best_epoch = epoch
            if best_path is not None:
                checkpoint_save(best_path, net, meta={
                    "epoch": epoch, "val_loss": val_loss,
                    "loss_kind": loss_kind, "seed": seed,
                })
    return state


# ---------------------------------------------------------------------------
# Predictors: anything that maps a grayscale clip to a depth clip.

def predict_clip(net: DepthNet, clip: VideoTensor) -> VideoTensor:
    """Run the network on one grayscale clip (T, H, W, 1) -> (T, H/2, W/2, 1)."""
    c = net.config
    if (clip.frames, clip.height, clip.width, clip.channels) != (c.frames, c.height, c.width, c.in_channels):
        raise SizeError(f"clip {(clip.frames, clip.height, clip.width, clip.channels)} does not "
                        f"match net input {(c.frames, c.height, c.width, c.in_channels)}")
    x = torch.from_numpy(np.moveaxis(clip.data, 3, 0)[None]).to(c.torch_dtype)
    with torch.no_grad():
        y = net(x)
    return VideoTensor(y[0, 0].cpu().numpy().astype(np.float64)[..., None])


class NetPredictor:
    """Predict depth with a trained network."""

    def __init__(self, net: DepthNet):
        self.net = net

    def predict(self, gray: np.ndarray, truth: np.ndarray | None = None) -> np.ndarray:
        return predict_clip(self.net, VideoTensor(gray[..., None])).planes()


class OraclePredictor:
    """Return the ground truth; a plumbing check, not an estimator."""

    def predict(self, gray: np.ndarray, truth: np.ndarray | None = None) -> np.ndarray:
        if truth is None:
            raise ConfigError("oracle predictor needs the target depth")
        return truth.copy()


class ConstantPlanePredictor:
    """Predict a constant; under relief alignment this is the best-plane baseline."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def predict(self, gray: np.ndarray, truth: np.ndarray | None = None) -> np.ndarray:
        t, h, w = gray.shape
        return np.full((t, h // 2, w // 2), self.value)
