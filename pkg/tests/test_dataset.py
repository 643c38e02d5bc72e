import json

import numpy as np
import pytest

from conftest import make_scene, moving_rect
from exwarp.dataset import load_dataset, load_episode, save_dataset
from exwarp.errors import (ChecksumMismatchError, DatasetFormatError,
                           DimensionMismatchError)
from exwarp.scenegen import render_episode


@pytest.fixture(scope="module")
def episode_pair():
    spec = make_scene(objects=[moving_rect()], episode_len=4, width=32, height=32)
    return render_episode(spec)


def test_round_trip_is_bit_exact(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    save_dataset(tmp_path / "ds", frames, gbuffers, base_fps=30, rng_seed=9)
    frames2, gbuffers2 = load_dataset(tmp_path / "ds")
    assert len(frames2) == len(frames)
    assert len(gbuffers2) == len(gbuffers)
    for a, b in zip(frames, frames2):
        assert a.timestamp == b.timestamp
        assert a.pixels.tobytes() == b.pixels.tobytes()
    for a, b in zip(gbuffers, gbuffers2):
        assert a.motion_dense.tobytes() == b.motion_dense.tobytes()
        assert a.motion_blocks.tobytes() == b.motion_blocks.tobytes()
        assert a.stencil.tobytes() == b.stencil.tobytes()
        assert a.world_normal.tobytes() == b.world_normal.tobytes()
        assert a.world_position.tobytes() == b.world_position.tobytes()


def test_episode_wrapper_carries_metadata(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    save_dataset(tmp_path / "ds", frames, gbuffers, base_fps=24, rng_seed=123)
    ep = load_episode(tmp_path / "ds")
    assert ep.base_fps == 24
    assert ep.rng_seed == 123
    assert ep.episode_len == len(gbuffers)
    assert ep.width == 32 and ep.height == 32


def test_missing_manifest_is_format_error(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path / "empty")


def test_version_mismatch_is_format_error(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    root = tmp_path / "ds"
    save_dataset(root, frames, gbuffers)
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["format_version"] = 99
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetFormatError):
        load_dataset(root)


def test_tampered_file_is_checksum_error(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    root = tmp_path / "ds"
    save_dataset(root, frames, gbuffers)
    target = root / "gbuf" / "000000.mvd"
    data = bytearray(target.read_bytes())
    data[-1] ^= 0xFF
    target.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError):
        load_dataset(root)


def test_dimension_mismatch_between_manifest_and_pixels(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    root = tmp_path / "ds"
    save_dataset(root, frames, gbuffers)
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["width"] = 64
    manifest["height"] = 64
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DimensionMismatchError):
        load_dataset(root)


def test_missing_listed_file_is_format_error(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    root = tmp_path / "ds"
    save_dataset(root, frames, gbuffers)
    (root / "frames" / "q000000.png").unlink()
    with pytest.raises(DatasetFormatError):
        load_dataset(root)


def test_binary_headers(tmp_path, episode_pair):
    frames, gbuffers = episode_pair
    root = tmp_path / "ds"
    save_dataset(root, frames, gbuffers)
    mvd = (root / "gbuf" / "000000.mvd").read_bytes()
    assert mvd[:4] == b"MVD1"
    w = int.from_bytes(mvd[4:8], "little")
    h = int.from_bytes(mvd[8:12], "little")
    assert (w, h) == (32, 32)
    assert len(mvd) == 12 + w * h * 2 * 4
    mvb = (root / "gbuf" / "000000.mvb").read_bytes()
    bw = int.from_bytes(mvb[4:8], "little")
    bh = int.from_bytes(mvb[8:12], "little")
    assert (bw, bh) == (2, 2)
    assert (root / "gbuf" / "000000.normal.bin").read_bytes()[:4] == b"NRM1"
    assert (root / "gbuf" / "000000.wpos.bin").read_bytes()[:4] == b"WPS1"
