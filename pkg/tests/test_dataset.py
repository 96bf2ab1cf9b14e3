"""Clip container round trips, corruption taxonomy, invariant-field container."""

import json
import struct

import numpy as np
import pytest

from nrdk.core import VideoTensor
from nrdk.dataset import (DATA_FILE, MANIFEST_FILE, dataset_count,
                          dataset_read, dataset_write, fields_read,
                          fields_write, load_manifest)
from nrdk.errors import DataFormatError, SizeError
from nrdk.render import ClipMeta, ClipSample


def rng():
    return np.random.default_rng(20240821)


def fake_clip(r, seed=0, frames=3, size=12):
    render = r.random((frames, size, size, 3)).astype(np.float32).astype(np.float64)
    depth = r.random((frames, size, size, 1)).astype(np.float32).astype(np.float64)
    hit = r.random((frames, size, size)) > 0.3
    params = {"kappa": float(r.random()), "label": f"clip{seed}"}
    return ClipSample(render=VideoTensor(render), depth=VideoTensor(depth),
                      hit=hit, meta=ClipMeta(seed=seed, params=params))


def write_three(tmp_path, r):
    clips = [fake_clip(r, seed=i) for i in range(3)]
    manifest = dataset_write(clips, tmp_path / "ds")
    return clips, manifest, tmp_path / "ds"


# ---------------------------------------------------------------------------
# Round trips.

def test_round_trip_bit_exact(tmp_path):
    clips, manifest, ds = write_three(tmp_path, rng())
    back = list(dataset_read(ds))
    assert len(back) == 3
    for orig, got in zip(clips, back):
        assert np.array_equal(orig.render.data, got.render.data)
        assert np.array_equal(orig.depth.data, got.depth.data)
        assert np.array_equal(orig.hit, got.hit)
        assert got.meta.seed == orig.meta.seed
        assert got.meta.params == orig.meta.params
        assert got.meta.digest() == orig.meta.digest()
    assert manifest["count"] == 3
    assert dataset_count(ds) == 3


def test_read_bare_file_without_manifest(tmp_path):
    r = rng()
    clips, _, ds = write_three(tmp_path, r)
    (ds / MANIFEST_FILE).unlink()
    back = list(dataset_read(ds / DATA_FILE))
    assert len(back) == 3
    # params live in the manifest; without it only the digest seed survives
    assert back[0].meta.params == {}
    assert back[0].meta.seed == clips[0].meta.seed
    assert np.array_equal(back[0].depth.data, clips[0].depth.data)


def test_empty_dataset(tmp_path):
    manifest = dataset_write([], tmp_path / "ds")
    assert manifest["count"] == 0
    assert list(dataset_read(tmp_path / "ds")) == []
    assert dataset_count(tmp_path / "ds") == 0


def test_write_is_deterministic(tmp_path):
    r1, r2 = rng(), rng()
    dataset_write([fake_clip(r1, seed=5)], tmp_path / "a")
    dataset_write([fake_clip(r2, seed=5)], tmp_path / "b")
    assert (tmp_path / "a" / DATA_FILE).read_bytes() == (tmp_path / "b" / DATA_FILE).read_bytes()
    assert (tmp_path / "a" / MANIFEST_FILE).read_text() == (tmp_path / "b" / MANIFEST_FILE).read_text()


# ---------------------------------------------------------------------------
# Corruption taxonomy: every truncation or mismatch is named.

def test_bad_magic(tmp_path):
    _, _, ds = write_three(tmp_path, rng())
    data = bytearray((ds / DATA_FILE).read_bytes())
    data[:4] = b"JUNK"
    (ds / DATA_FILE).write_bytes(data)
    with pytest.raises(DataFormatError, match="magic"):
        list(dataset_read(ds))
    with pytest.raises(DataFormatError, match="magic"):
        dataset_count(ds)


def test_unsupported_version(tmp_path):
    _, _, ds = write_three(tmp_path, rng())
    data = bytearray((ds / DATA_FILE).read_bytes())
    data[4:6] = struct.pack("<H", 99)
    (ds / DATA_FILE).write_bytes(data)
    with pytest.raises(DataFormatError, match="version"):
        list(dataset_read(ds))


def test_truncation_names_the_read(tmp_path):
    _, _, ds = write_three(tmp_path, rng())
    data = (ds / DATA_FILE).read_bytes()
    (ds / DATA_FILE).write_bytes(data[: len(data) - 40])
    with pytest.raises(DataFormatError, match="clip 2"):
        list(dataset_read(ds))
    # cutting into the first clip's pixel payload names that stage instead
    (ds / DATA_FILE).write_bytes(data[:200])
    with pytest.raises(DataFormatError, match="clip 0 render data"):
        list(dataset_read(ds))


def test_manifest_digest_mismatch(tmp_path):
    _, _, ds = write_three(tmp_path, rng())
    manifest = json.loads((ds / MANIFEST_FILE).read_text())
    manifest["clips"][1]["params"]["kappa"] = 0.123456
    (ds / MANIFEST_FILE).write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="clip 1"):
        list(dataset_read(ds))


def test_invalid_manifest_json(tmp_path):
    _, _, ds = write_three(tmp_path, rng())
    (ds / MANIFEST_FILE).write_text("{not json")
    with pytest.raises(DataFormatError, match="manifest"):
        load_manifest(ds)


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="cannot open"):
        list(dataset_read(tmp_path / "nope"))


# ---------------------------------------------------------------------------
# Invariant-field container.

def test_fields_round_trip(tmp_path):
    r = rng()
    clips = []
    for _ in range(3):
        values = r.random((2, 6, 5, 3)).astype(np.float32).astype(np.float64)
        mask = r.random((2, 6, 5)) > 0.4
        clips.append((values, mask))
    path = tmp_path / "fields.nrif"
    assert fields_write(clips, "gbr", path) == 3
    kind, back = fields_read(path)
    assert kind == "gbr"
    for (v0, m0), (v1, m1) in zip(clips, back):
        assert np.array_equal(v0, v1)
        assert np.array_equal(m0, m1)


def test_fields_trsc_kind_and_errors(tmp_path):
    r = rng()
    one = [(r.random((1, 4, 4, 6)).astype(np.float32).astype(np.float64),
            np.ones((1, 4, 4), dtype=bool))]
    path = tmp_path / "fields.nrif"
    fields_write(one, "trsc", path)
    kind, back = fields_read(path)
    assert kind == "trsc" and back[0][0].shape == (1, 4, 4, 6)
    with pytest.raises(SizeError):
        fields_write(one, "euclidean", path)
    data = bytearray(path.read_bytes())
    data[:4] = b"JUNK"
    path.write_bytes(data)
    with pytest.raises(DataFormatError, match="magic"):
        fields_read(path)


def test_fields_truncation(tmp_path):
    r = rng()
    one = [(r.random((2, 8, 8, 3)).astype(np.float32).astype(np.float64),
            np.ones((2, 8, 8), dtype=bool))]
    path = tmp_path / "fields.nrif"
    fields_write(one, "gbr", path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 10])
    with pytest.raises(DataFormatError, match="field 0"):
        fields_read(path)
