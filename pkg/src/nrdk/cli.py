"""Command-line interface.

Exit codes: 0 on success, 2 for configuration and usage problems, 3 for
missing or malformed files, 4 for numeric failures at run time.

The thread count comes from --threads, then the NRDK_THREADS environment
variable, then 1.  At one thread the torch pool is pinned to a single
worker, which makes generate, train and reconstruct bit-reproducible.

Torch-backed subcommands import their modules lazily so that generation
and previews stay light.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import (DEFAULT_CONFIG, SCENE_CONFIG, GenerationConfig,
                     config_from_dict, load_generation_config)
from .core import grayscale
from .dataset import dataset_count, dataset_read, fields_write
from .errors import (ConfigError, DataFormatError, DegenerateInputError,
                     DivergenceError, FitError, MetricError, NrdkError,
                     SizeError)
from .generate import generate_dataset
from .invariants import eta, iota, jet
from .losses import mae_sn
from .report import save_clip_preview, save_depth_comparison, save_frame_png

PROFILES = {"default": DEFAULT_CONFIG, "scene": SCENE_CONFIG}


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("NRDK_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"NRDK_THREADS must be an integer, got {env!r}") from None
    return 1


def _torch_threads(n: int) -> None:
    import torch

    torch.set_num_threads(max(1, n))


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_set(pairs: list[str]) -> dict:
    """Dotted key=value overrides; values are JSON, bare words are strings."""
    tree: dict = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set wants key=value, got {pair!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not a section")
        node[parts[-1]] = value
    return tree


def _build_config(args) -> GenerationConfig:
    """CLI flags beat --set, which beats the config file, which beats the profile."""
    base = PROFILES[getattr(args, "profile", "default")].to_dict()
    if getattr(args, "config", None):
        base = _deep_merge(base, load_generation_config(args.config).to_dict())
    if getattr(args, "set", None):
        base = _deep_merge(base, _parse_set(args.set))
    for name in ("width", "height", "frames"):
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    cfg = config_from_dict(base)
    cfg.validate()
    return cfg


def _pick_clip(data: str, index: int):
    for i, clip in enumerate(dataset_read(data)):
        if i == index:
            return clip
    raise SizeError(f"dataset {data} has no clip {index} ({dataset_count(data)} clips)")


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_generate(args) -> int:
    cfg = _build_config(args)
    manifest = generate_dataset(cfg, args.count, args.seed, args.out,
                                threads=_threads(args))
    print(f"wrote {manifest['count']} clips to {args.out}")
    return 0


def cmd_invariants(args) -> int:
    fn = iota if args.kind == "gbr" else eta

    def per_clip():
        for clip in dataset_read(args.data):
            frames = [fn(jet(z)) for z in clip.depth.planes()]
            values = np.stack([f.values for f in frames])
            masks = np.stack([f.mask for f in frames])
            yield values, masks

    count = fields_write(per_clip(), args.kind, args.out)
    print(f"wrote {args.kind} fields for {count} clips to {args.out}")
    return 0


def cmd_train(args) -> int:
    _torch_threads(_threads(args))
    from .net import NetConfig
    from .training import OptimizerConfig, train

    if args.net_config:
        try:
            with open(args.net_config) as fh:
                net_config = NetConfig.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.net_config}: invalid JSON ({exc})") from exc
    else:
        net_config = NetConfig()
    opt = OptimizerConfig(lr=args.lr, batch_size=args.batch)
    state = train(args.data, net_config, opt, args.epochs, args.seed,
                  args.loss, out_dir=args.out)
    print(f"trained {args.epochs} epochs; best val {state.best_val:.6g} "
          f"at epoch {state.best_epoch}; checkpoints in {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    _torch_threads(_threads(args))
    from .stitcher import reconstruct_video
    from .training import checkpoint_load

    net, _ = checkpoint_load(args.checkpoint)
    clip = _pick_clip(args.data, args.clip)
    pred = reconstruct_video(grayscale(clip.render), net, upsample=args.upsample)
    out = Path(args.out)
    if out.suffix != ".npy":
        raise ConfigError(f"--out must be a .npy path, got {args.out}")
    np.save(out, pred.planes())
    if args.preview:
        Path(args.preview).mkdir(parents=True, exist_ok=True)
        save_depth_comparison(clip.depth.planes(), pred.planes(),
                              Path(args.preview) / "reconstruction.png",
                              title=f"clip {args.clip}")
    print(f"wrote {pred.frames}x{pred.height}x{pred.width} depth to {out}")
    return 0


def cmd_evaluate(args) -> int:
    _torch_threads(_threads(args))
    from .training import (ConstantPlanePredictor, NetPredictor,
                           checkpoint_load, load_pairs, split_indices)

    net, _ = checkpoint_load(args.checkpoint)
    gray, depth = load_pairs(args.data)
    if args.split == "all":
        indices = np.arange(len(gray))
    else:
        train_idx, val_idx, test_idx = split_indices(len(gray), args.seed)
        indices = {"train": train_idx, "val": val_idx, "test": test_idx}[args.split]
    predictor = NetPredictor(net)
    baseline = ConstantPlanePredictor()
    clips = []
    net_vals, base_vals = [], []
    for i in indices:
        g = np.asarray(gray[i], dtype=np.float64)
        pred = predictor.predict(g, depth[i])
        score = mae_sn(pred, depth[i], align=args.align, group=args.group).mae_sn
        floor = mae_sn(baseline.predict(g), depth[i], align=args.align,
                       group=args.group).mae_sn
        clips.append({"clip": int(i), "mae_sn": score, "baseline": floor})
        net_vals.append(score)
        base_vals.append(floor)
    result = {
        "split": args.split,
        "align": args.align,
        "group": args.group,
        "clips": clips,
        "mean": float(np.mean(net_vals)),
        "std": float(np.std(net_vals)),
        "baseline_mean": float(np.mean(base_vals)),
    }
    with open(args.out, "w") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
    print(f"mae-sn {result['mean']:.4f} (baseline {result['baseline_mean']:.4f}) "
          f"over {len(clips)} {args.split} clips -> {args.out}")
    return 0


def cmd_experiment1(args) -> int:
    _torch_threads(_threads(args))
    from .experiments import run_experiment1
    from .net import NetConfig
    from .training import OptimizerConfig

    if args.net_config:
        with open(args.net_config) as fh:
            net_config = NetConfig.from_dict(json.load(fh))
    else:
        net_config = NetConfig()
    opt = OptimizerConfig(lr=args.lr, batch_size=args.batch)
    mode = "oracle" if args.oracle else "net"
    summary = run_experiment1(args.data, args.out, net_config, opt,
                              epochs=args.epochs, seed=args.seed,
                              predictor_mode=mode)
    for kind, run in summary["losses"].items():
        print(f"loss={kind}: per-frame {run['per-frame']['mean']:.4f} "
              f"first-frame {run['first-frame']['mean']:.4f}")
    print(f"baseline: per-frame {summary['baseline']['per-frame']['mean']:.4f}")
    return 0


def cmd_experiment2(args) -> int:
    if not args.oracle and not args.checkpoint:
        raise ConfigError("experiment2 needs --checkpoint unless --oracle is set")
    _torch_threads(_threads(args))
    from .experiments import run_experiment2

    cfg = load_generation_config(args.config) if args.config else None
    summary = run_experiment2(args.checkpoint if not args.oracle else None,
                              args.out, scenes=args.scenes, seed=args.seed,
                              config=cfg, upsample=args.upsample,
                              oracle=args.oracle)
    print(f"scenes {args.scenes}: net {summary['net_mean']:.4f} "
          f"baseline {summary['baseline_mean']:.4f} -> {args.out}")
    return 0


def cmd_preview(args) -> int:
    clip = _pick_clip(args.data, args.clip)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gray = grayscale(clip.render).planes()
    depth = clip.depth.planes()
    step = max(1, gray.shape[0] // args.count)
    written = []
    for t in list(range(0, gray.shape[0], step))[: args.count]:
        written.append(save_frame_png(gray[t], out / f"gray_{t:03d}.png"))
        written.append(save_frame_png(depth[t], out / f"depth_{t:03d}.png",
                                      normalized=True))
    written.append(save_clip_preview(gray, depth, out / "clip.png",
                                     count=args.count,
                                     title=f"clip {args.clip}"))
    print(f"wrote {len(written)} files to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser.

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrdk",
        description="Synthesize, train on and reconstruct deforming-surface depth videos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: NRDK_THREADS or 1)")

    p = sub.add_parser("generate", help="render a dataset of (video, depth) clips")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=sorted(PROFILES), default="default")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, value in JSON (repeatable)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int)
    add_threads(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("invariants", help="invariant fields of the true depth")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("gbr", "trsc"), default="gbr")
    p.set_defaults(fn=cmd_invariants)

    p = sub.add_parser("train", help="train a depth estimator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=("gbr", "trsc"), default="gbr")
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--net-config", help="JSON file with architecture fields")
    add_threads(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("reconstruct", help="tile-and-stitch depth for one clip")
    p.add_argument("--data", required=True)
    p.add_argument("--clip", type=int, default=0)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help=".npy path for the depth video")
    p.add_argument("--upsample", action="store_true",
                   help="bilinearly upsample back to the input size")
    p.add_argument("--preview", help="directory for a comparison figure")
    add_threads(p)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="MAE-SN of a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--align", choices=("per-frame", "first-frame", "none"),
                   default="per-frame")
    p.add_argument("--group", choices=("gbr", "trsc"), default="gbr")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    add_threads(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("experiment1", help="train both losses, table the metric")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--net-config", help="JSON file with architecture fields")
    p.add_argument("--oracle", action="store_true",
                   help="plumbing check with a truth-reading predictor")
    add_threads(p)
    p.set_defaults(fn=cmd_experiment1)

    p = sub.add_parser("experiment2", help="reconstruct out-of-distribution scenes")
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=5)
    p.add_argument("--seed", type=int, default=2000)
    p.add_argument("--config", help="JSON config file (default: scene profile)")
    p.add_argument("--upsample", action="store_true")
    p.add_argument("--oracle", action="store_true",
                   help="score the pooled truth instead of a network")
    add_threads(p)
    p.set_defaults(fn=cmd_experiment2)

    p = sub.add_parser("preview", help="PNG previews of one clip")
    p.add_argument("--data", required=True)
    p.add_argument("--clip", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=6)
    p.set_defaults(fn=cmd_preview)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, SizeError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DivergenceError, MetricError, DegenerateInputError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NrdkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
