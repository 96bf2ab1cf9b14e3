"""Network architecture contracts: shapes, kernels, init, freezing."""

import numpy as np
import pytest
import torch

from nrdk.errors import ConfigError, SizeError
from nrdk.net import KERNEL, DepthNet, NetConfig, build_net

torch.set_num_threads(1)

TINY = NetConfig(stage_channels=(4, 8), width=16, height=16, frames=4)


def test_output_halves_space_keeps_time():
    net = build_net(TINY, seed=1)
    x = torch.zeros((2, 1, 4, 16, 16))
    y = net(x)
    assert tuple(y.shape) == (2, 1, 4, 8, 8)
    deeper = NetConfig(stage_channels=(4, 8, 8), width=16, height=16, frames=4)
    y2 = build_net(deeper, seed=1)(x)
    assert tuple(y2.shape) == (2, 1, 4, 8, 8)


def test_input_shape_rejected_loudly():
    net = build_net(TINY, seed=1)
    with pytest.raises(SizeError):
        net(torch.zeros((2, 1, 4, 16, 8)))
    with pytest.raises(SizeError):
        net(torch.zeros((1, 4, 16, 16)))
    with pytest.raises(SizeError):
        net(torch.zeros((2, 3, 4, 16, 16)))


def test_all_kernels_are_3x3x3_with_single_stride():
    net = build_net(NetConfig(stage_channels=(4, 8, 8, 8), width=16, height=16, frames=4), seed=0)
    strided = []
    for name, mod in net.named_modules():
        if isinstance(mod, torch.nn.Conv3d):
            assert mod.kernel_size == (KERNEL, KERNEL, KERNEL), name
            if mod.stride != (1, 1, 1):
                strided.append((name, mod.stride))
    # exactly one spatial reduction, never temporal
    assert strided == [("reduce", (1, 2, 2))]


def test_dilation_rates_by_depth():
    assert NetConfig.rates_for_stage(1) == (1, 2, 3)
    assert NetConfig.rates_for_stage(2) == (1, 2, 3)
    assert NetConfig.rates_for_stage(3) == (1, 2)
    net = build_net(NetConfig(stage_channels=(4, 8, 8), width=16, height=16, frames=4), seed=0)
    rates = [tuple(b.dilation[0] for b in m.branches)
             for m in [net.enc1, *net.encoders]]
    assert rates == [(1, 2, 3), (1, 2, 3), (1, 2)]


def test_param_count_frozen():
    # locks the architecture: any layer change moves this number
    def count(cfg):
        return sum(p.numel() for p in DepthNet(cfg).parameters())

    assert count(TINY) == 13125
    assert count(NetConfig(stage_channels=(4, 8, 8), width=16, height=16, frames=4)) == 35645


def test_zero_weights_give_constant_output():
    net = build_net(TINY, seed=3)
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    y = net(torch.from_numpy(np.random.default_rng(0).random((1, 1, 4, 16, 16))).float())
    assert torch.count_nonzero(y) == 0


def test_init_is_seed_deterministic_and_seed_sensitive():
    a = build_net(TINY, seed=42)
    b = build_net(TINY, seed=42)
    c = build_net(TINY, seed=43)
    va = torch.cat([p.flatten() for p in a.parameters()])
    vb = torch.cat([p.flatten() for p in b.parameters()])
    vc = torch.cat([p.flatten() for p in c.parameters()])
    assert torch.equal(va, vb)
    assert not torch.equal(va, vc)


def test_init_scales_and_zero_biases():
    net = build_net(TINY, seed=9)
    for name, p in net.named_parameters():
        if name.endswith("bias"):
            assert torch.count_nonzero(p) == 0
        else:
            fan_in = p.shape[1] * p.shape[2] * p.shape[3] * p.shape[4]
            assert p.abs().max().item() <= 1.0 / np.sqrt(fan_in) + 1e-12


def test_freeze_by_prefix():
    net = build_net(TINY, seed=5)
    net.freeze(["enc1", "head"])
    for name, p in net.named_parameters():
        want = not (name.startswith("enc1") or name.startswith("head"))
        assert p.requires_grad is want


def test_config_validation():
    with pytest.raises(ConfigError):
        NetConfig(stage_channels=(4,))
    with pytest.raises(ConfigError):
        NetConfig(stage_channels=(4, 0))
    with pytest.raises(ConfigError):
        NetConfig(width=15, height=16)
    with pytest.raises(ConfigError):
        NetConfig(in_channels=2)
    with pytest.raises(ConfigError):
        NetConfig(dtype="float16")


def test_config_round_trips_through_dict():
    cfg = NetConfig(stage_channels=(4, 8), width=32, height=16, frames=8)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg


def test_forward_is_deterministic():
    net = build_net(TINY, seed=7)
    x = torch.from_numpy(np.random.default_rng(1).random((1, 1, 4, 16, 16))).float()
    with torch.no_grad():
        assert torch.equal(net(x), net(x))
