"""Binary clip container and its JSON manifest.

A dataset directory holds ``clips.nrsd`` plus ``manifest.json``.  The binary
layout (all integers little-endian) is:

    magic  4 bytes  b"NRSD"
    u16    version  (currently 1)
    u16    flags    (reserved, 0)
    u32    clip count
    per clip:
        u32 x 4     render width, height, frames, channels
        f32[...]    render samples, C order of (frames, height, width, channels)
        u32 x 3     depth width, height, frames
        f32[...]    depth samples, C order of (frames, height, width)
        u8[...]     hit mask, numpy packbits of the C-order boolean,
                    ceil(W*H*T / 8) bytes
        64 bytes    metadata digest: u64 seed then sha512(params JSON)[:56]

Samples are stored at float32 precision; clips produced by the renderer are
already quantized to float32 values, so a write/read round trip is
bit-exact.  The manifest carries the full generation record per clip; the
reader attaches it when present.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import VideoTensor
from .errors import DataFormatError, SizeError
from .render import ClipMeta, ClipSample

MAGIC = b"NRSD"
VERSION = 1
DATA_FILE = "clips.nrsd"
MANIFEST_FILE = "manifest.json"


def _write_clip(fh, clip: ClipSample) -> None:
    r, d = clip.render, clip.depth
    fh.write(struct.pack("<4I", r.width, r.height, r.frames, r.channels))
    fh.write(np.ascontiguousarray(r.data, dtype="<f4").tobytes())
    fh.write(struct.pack("<3I", d.width, d.height, d.frames))
    fh.write(np.ascontiguousarray(d.data[..., 0], dtype="<f4").tobytes())
    fh.write(np.packbits(clip.hit.astype(np.uint8)).tobytes())
    digest = clip.meta.digest()
    if len(digest) != 64:
        raise DataFormatError(f"metadata digest must be 64 bytes, got {len(digest)}")
    fh.write(digest)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated file while reading {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_clip(fh, index: int, manifest_entry: dict | None) -> ClipSample:
    rw, rh, rt, rc = struct.unpack("<4I", _read_exact(fh, 16, f"clip {index} render dims"))
    n = rw * rh * rt * rc
    render = np.frombuffer(_read_exact(fh, 4 * n, f"clip {index} render data"), dtype="<f4")
    render = render.reshape(rt, rh, rw, rc).astype(np.float64)
    dw, dh, dt = struct.unpack("<3I", _read_exact(fh, 12, f"clip {index} depth dims"))
    m = dw * dh * dt
    depth = np.frombuffer(_read_exact(fh, 4 * m, f"clip {index} depth data"), dtype="<f4")
    depth = depth.reshape(dt, dh, dw).astype(np.float64)
    nbytes = -(-m // 8)
    bits = np.frombuffer(_read_exact(fh, nbytes, f"clip {index} hit mask"), dtype=np.uint8)
    hit = np.unpackbits(bits, count=m).reshape(dt, dh, dw).astype(bool)
    digest = _read_exact(fh, 64, f"clip {index} metadata digest")
    seed = int.from_bytes(digest[:8], "little")

    params = manifest_entry.get("params", {}) if manifest_entry else {}
    meta = ClipMeta(seed=seed, params=params)
    if params and meta.digest() != digest:
        raise DataFormatError(f"clip {index}: manifest does not match the stored digest")
    return ClipSample(
        render=VideoTensor(render),
        depth=VideoTensor(depth[..., None]),
        hit=hit,
        meta=meta,
    )


def dataset_write(samples: Iterable[ClipSample], path: str | Path) -> dict:
    """Write clips and manifest into a dataset directory; returns the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    count = 0
    with open(path / DATA_FILE, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHI", VERSION, 0, 0))  # count patched afterwards
        for clip in samples:
            _write_clip(fh, clip)
            entries.append({
                "index": count,
                "seed": clip.meta.seed,
                "digest": clip.meta.digest().hex(),
                "params": clip.meta.params,
            })
            count += 1
        fh.seek(len(MAGIC) + 4)
        fh.write(struct.pack("<I", count))
    manifest = {
        "format": MAGIC.decode(),
        "version": VERSION,
        "count": count,
        "data_file": DATA_FILE,
        "clips": entries,
    }
    with open(path / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path: str | Path) -> dict | None:
    mf = Path(path) / MANIFEST_FILE
    if not mf.exists():
        return None
    try:
        with open(mf, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{mf}: invalid manifest JSON ({exc})") from exc


def dataset_read(path: str | Path) -> Iterator[ClipSample]:
    """Stream clips from a dataset directory or a bare .nrsd file."""
    path = Path(path)
    if path.is_dir():
        manifest = load_manifest(path)
        data = path / (manifest["data_file"] if manifest else DATA_FILE)
    else:
        manifest = load_manifest(path.parent)
        data = path
    by_index = {}
    if manifest:
        by_index = {e["index"]: e for e in manifest.get("clips", [])}
    try:
        fh = open(data, "rb")
    except OSError as exc:
        raise DataFormatError(f"cannot open dataset file {data}: {exc}") from exc
    with fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise DataFormatError(f"{data}: bad magic; not an NRSD file")
        version, _flags, count = struct.unpack("<HHI", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise DataFormatError(f"{data}: unsupported version {version}")
        for i in range(count):
            yield _read_clip(fh, i, by_index.get(i))


def dataset_count(path: str | Path) -> int:
    path = Path(path)
    data = path / DATA_FILE if path.is_dir() else path
    with open(data, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise DataFormatError(f"{data}: bad magic; not an NRSD file")
        _, _, count = struct.unpack("<HHI", _read_exact(fh, 8, "header"))
    return count


# ---------------------------------------------------------------------------
# Invariant-field container ("NRIF"), for the inspection CLI.
#
#     magic 4 bytes b"NRIF"; u16 version = 1; u8 kind (0 = gbr, 1 = trsc);
#     u8 pad; u32 clip count; per clip: u32 W, H, T, C; f32 values in C order
#     of (T, H, W, C); packed mask bits of the C-order (T, H, W) boolean.

FIELD_MAGIC = b"NRIF"
_KIND_CODES = {"gbr": 0, "trsc": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def fields_write(clips: Iterable[tuple[np.ndarray, np.ndarray]], kind: str,
                 path: str | Path) -> int:
    """Write per-clip stacks of invariant values (T, H, W, C) and masks (T, H, W)."""
    if kind not in _KIND_CODES:
        raise SizeError(f"kind must be 'gbr' or 'trsc', got {kind!r}")
    count = 0
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<HBBI", 1, _KIND_CODES[kind], 0, 0))
        for values, mask in clips:
            t, h, w, c = values.shape
            fh.write(struct.pack("<4I", w, h, t, c))
            fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
            fh.write(np.packbits(mask.astype(np.uint8)).tobytes())
            count += 1
        fh.seek(len(FIELD_MAGIC) + 4)
        fh.write(struct.pack("<I", count))
    return count


def fields_read(path: str | Path) -> tuple[str, list[tuple[np.ndarray, np.ndarray]]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != FIELD_MAGIC:
            raise DataFormatError(f"{path}: bad magic; not an NRIF file")
        version, kind_code, _pad, count = struct.unpack("<HBBI", _read_exact(fh, 8, "header"))
        if version != 1 or kind_code not in _KIND_NAMES:
            raise DataFormatError(f"{path}: unsupported version {version} or kind {kind_code}")
        out = []
        for i in range(count):
            w, h, t, c = struct.unpack("<4I", _read_exact(fh, 16, f"field {i} dims"))
            n = w * h * t * c
            values = np.frombuffer(_read_exact(fh, 4 * n, f"field {i} values"), dtype="<f4")
            values = values.reshape(t, h, w, c).astype(np.float64)
            m = w * h * t
            bits = np.frombuffer(_read_exact(fh, -(-m // 8), f"field {i} mask"), dtype=np.uint8)
            mask = np.unpackbits(bits, count=m).reshape(t, h, w).astype(bool)
            out.append((values, mask))
    return _KIND_NAMES[kind_code], out
