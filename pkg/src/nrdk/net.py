"""A small 3D convolutional encoder-decoder for patch depth estimation.

The network maps a (batch, 1, frames, H, W) grayscale clip to a depth clip
at half spatial resolution, (batch, 1, frames, H/2, W/2); time is never
downsampled and the single 2x spatial reduction is a strided convolution
entering stage 2.  Every stage is a context module: parallel 3x3x3
convolutions with different dilation rates, concatenated and fused by one
more 3x3x3 convolution.  Stages 1 and 2 use rates (1, 2, 3); deeper stages
use (1, 2).  Encoder stages past the reduction feed skip connections to
mirrored decoder stages (concatenation).  All convolutions use 3x3x3
kernels with zero padding sized to preserve dims; activations are leaky
ReLU with slope 0.1 everywhere except the linear output head.

Weights are initialized uniform with fan-in scaling from a seeded torch
generator, biases at zero; the parameter order is the module definition
order, which the checkpoint shape registry relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError, SizeError

KERNEL = 3
LEAKY_SLOPE = 0.1


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters; defaults are the full-size network."""

    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    width: int = 64
    height: int = 64
    frames: int = 16
    in_channels: int = 1
    dtype: str = "float32"  # internal compute dtype; the public API is float64

    def __post_init__(self):
        if len(self.stage_channels) < 2:
            raise ConfigError(f"need at least 2 stages, got {self.stage_channels}")
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"stage channels must be positive, got {self.stage_channels}")
        if self.width % 2 or self.height % 2:
            raise ConfigError(f"input dims must be even, got {self.width}x{self.height}")
        if self.width < 4 or self.height < 4 or self.frames < 1:
            raise ConfigError(f"input {self.width}x{self.height}x{self.frames} too small")
        if self.in_channels not in (1, 3):
            raise ConfigError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @staticmethod
    def rates_for_stage(stage: int) -> tuple[int, ...]:
        """Dilation rates per stage (1-based): (1, 2, 3) early, (1, 2) deep."""
        return (1, 2, 3) if stage <= 2 else (1, 2)

    @property
    def out_size(self) -> tuple[int, int, int]:
        return (self.frames, self.height // 2, self.width // 2)

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    def to_dict(self) -> dict:
        return {
            "stage_channels": list(self.stage_channels),
            "width": self.width, "height": self.height, "frames": self.frames,
            "in_channels": self.in_channels, "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetConfig":
        data = dict(data)
        if "stage_channels" in data:
            data["stage_channels"] = tuple(data["stage_channels"])
        return cls(**data)


class ContextModule(nn.Module):
    """Parallel dilated 3x3x3 convolutions, concatenated then fused."""

    def __init__(self, in_ch: int, out_ch: int, rates: tuple[int, ...]):
        super().__init__()
        self.branches = nn.ModuleList([
            nn.Conv3d(in_ch, out_ch, KERNEL, padding=r, dilation=r) for r in rates
        ])
        self.fuse = nn.Conv3d(out_ch * len(rates), out_ch, KERNEL, padding=1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x):
        feats = [self.act(b(x)) for b in self.branches]
        return self.act(self.fuse(torch.cat(feats, dim=1)))


class DepthNet(nn.Module):
    """Encoder-decoder over context modules with one spatial 2x reduction."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        ch = config.stage_channels
        stages = len(ch)
        self.enc1 = ContextModule(config.in_channels, ch[0], NetConfig.rates_for_stage(1))
        self.reduce = nn.Conv3d(ch[0], ch[1], KERNEL, stride=(1, 2, 2), padding=1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.encoders = nn.ModuleList([
            ContextModule(ch[i - 1] if i > 1 else ch[1], ch[i],
                          NetConfig.rates_for_stage(i + 1))
            for i in range(1, stages)
        ])
        self.decoders = nn.ModuleList([
            ContextModule(ch[i + 1] + ch[i], ch[i], NetConfig.rates_for_stage(i + 1))
            for i in range(stages - 2, 0, -1)
        ])
        self.head = nn.Conv3d(ch[1], 1, KERNEL, padding=1)
        self.to(config.torch_dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        c = self.config
        want = (c.in_channels, c.frames, c.height, c.width)
        if x.ndim != 5 or tuple(x.shape[1:]) != want:
            raise SizeError(f"input must be (B, {want[0]}, {want[1]}, {want[2]}, {want[3]}), got {tuple(x.shape)}")
        x = self.enc1(x)
        x = self.act(self.reduce(x))
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
        skips.pop()  # the bottleneck output is x itself
        for dec in self.decoders:
            x = dec(torch.cat([x, skips.pop()], dim=1))
        return self.head(x)

    def freeze(self, names: list[str]) -> None:
        """Disable gradients for parameters whose name starts with any prefix."""
        for pname, p in self.named_parameters():
            if any(pname.startswith(n) for n in names):
                p.requires_grad_(False)


def init_params(net: DepthNet, seed: int) -> None:
    """Fan-in-scaled uniform weights, zero biases, from a seeded generator."""
    gen = torch.Generator()
    gen.manual_seed(seed)
    for name, p in net.named_parameters():
        if name.endswith("bias"):
            with torch.no_grad():
                p.zero_()
        else:
            fan_in = p.shape[1] * p.shape[2] * p.shape[3] * p.shape[4]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                vals = torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2.0 - 1.0
                p.copy_((vals * bound).to(p.dtype))


def build_net(config: NetConfig, seed: int = 0) -> DepthNet:
    net = DepthNet(config)
    init_params(net, seed)
    return net
