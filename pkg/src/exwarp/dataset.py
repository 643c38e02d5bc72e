"""Dataset persistence: manifest + PNG frames + binary G-buffer rasters.

Directory layout:
    manifest.json            format_version, dims, fps, episode_len, seed, checksums
    frames/q%06d.png         8-bit RGB, one per quarter-slot
    gbuf/%06d.mvd            dense motion: "MVD1", u32 w, u32 h, f32 pairs (LE)
    gbuf/%06d.mvb            block motion: same header with block dims
    gbuf/%06d.stencil.png    8-bit grayscale object ids
    gbuf/%06d.normal.bin     "NRM1" + row-major f32 triples
    gbuf/%06d.wpos.bin       "WPS1" + row-major f32 triples
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ChecksumMismatchError, DatasetFormatError, DimensionMismatchError
from .scenegen import BLOCK_SIZE, Frame, GBufferSet

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Episode:
    """A loaded or freshly rendered episode plus its display parameters."""

    frames: list[Frame]
    gbuffers: list[GBufferSet]
    base_fps: int
    rng_seed: int

    @property
    def width(self) -> int:
        return self.frames[0].pixels.shape[1]

    @property
    def height(self) -> int:
        return self.frames[0].pixels.shape[0]

    @property
    def episode_len(self) -> int:
        return len(self.gbuffers)

    def ground_truth(self, quarter_slot: int) -> Frame:
        return self.frames[quarter_slot]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path, format="PNG")


def _write_vector_field(path: Path, magic: bytes, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", magic, w, h))
        f.write(arr.astype("<f4").tobytes())


def _write_triples(path: Path, magic: bytes, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<4s", magic))
        f.write(arr.astype("<f4").tobytes())


def save_dataset(path, frames: list[Frame], gbuffers: list[GBufferSet],
                 *, base_fps: int = 30, rng_seed: int = 0) -> None:
    """Persist an episode; the round-trip through load_dataset is bit-exact."""
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "gbuf").mkdir(parents=True, exist_ok=True)

    h, w = frames[0].pixels.shape[:2]
    rel_files = []
    for i, frame in enumerate(frames):
        rel = f"frames/q{i:06d}.png"
        _write_png(root / rel, frame.pixels)
        rel_files.append(rel)
    for i, gb in enumerate(gbuffers):
        writers = (
            (f"gbuf/{i:06d}.mvd", lambda p, g=gb: _write_vector_field(p, b"MVD1", g.motion_dense)),
            (f"gbuf/{i:06d}.mvb", lambda p, g=gb: _write_vector_field(p, b"MVD1", g.motion_blocks)),
            (f"gbuf/{i:06d}.stencil.png", lambda p, g=gb: _write_png(p, g.stencil)),
            (f"gbuf/{i:06d}.normal.bin", lambda p, g=gb: _write_triples(p, b"NRM1", g.world_normal)),
            (f"gbuf/{i:06d}.wpos.bin", lambda p, g=gb: _write_triples(p, b"WPS1", g.world_position)),
        )
        for rel, write in writers:
            write(root / rel)
            rel_files.append(rel)

    manifest = {
        "format_version": FORMAT_VERSION,
        "width": w,
        "height": h,
        "base_fps": base_fps,
        "episode_len": len(gbuffers),
        "rng_seed": rng_seed,
        "files": {rel: _sha256(root / rel) for rel in sorted(rel_files)},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_exact(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"missing dataset file: {path}") from None


def _read_vector_field(path: Path, channels: int) -> np.ndarray:
    raw = _read_exact(path)
    if len(raw) < 12 or raw[:4] != b"MVD1":
        raise DatasetFormatError(f"{path.name}: bad magic for vector field")
    w, h = struct.unpack("<II", raw[4:12])
    data = np.frombuffer(raw[12:], dtype="<f4")
    if data.size != w * h * channels:
        raise DatasetFormatError(f"{path.name}: payload size does not match header dims")
    return data.reshape(h, w, channels).copy()


def _read_triples(path: Path, magic: bytes, h: int, w: int) -> np.ndarray:
    raw = _read_exact(path)
    if len(raw) < 4 or raw[:4] != magic:
        raise DatasetFormatError(f"{path.name}: bad magic, expected {magic!r}")
    data = np.frombuffer(raw[4:], dtype="<f4")
    if data.size != h * w * 3:
        raise DimensionMismatchError(
            f"{path.name}: {data.size} floats, manifest dims imply {h * w * 3}")
    return data.reshape(h, w, 3).copy()


def load_manifest(path) -> dict:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise DatasetFormatError(f"{root}: manifest.json missing")
    manifest = json.loads(mpath.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{root}: format_version {version}, expected {FORMAT_VERSION}")
    return manifest


def load_dataset(path) -> tuple[list[Frame], list[GBufferSet]]:
    """Load and verify an episode previously written by save_dataset."""
    root = Path(path)
    manifest = load_manifest(root)
    w, h = manifest["width"], manifest["height"]

    for rel, expect in manifest["files"].items():
        fpath = root / rel
        if not fpath.is_file():
            raise DatasetFormatError(f"{root}: file {rel} listed in manifest is missing")
        if _sha256(fpath) != expect:
            raise ChecksumMismatchError(f"{root}: checksum mismatch for {rel}")

    quarter_count = 4 * manifest["episode_len"] - 3
    frames = []
    for q in range(quarter_count):
        img = np.asarray(Image.open(root / f"frames/q{q:06d}.png"))
        if img.shape != (h, w, 3):
            raise DimensionMismatchError(
                f"frames/q{q:06d}.png is {img.shape}, manifest declares {h}x{w}x3")
        frames.append(Frame(pixels=img, timestamp=q))

    gbuffers = []
    for i in range(manifest["episode_len"]):
        dense = _read_vector_field(root / f"gbuf/{i:06d}.mvd", 2)
        if dense.shape[:2] != (h, w):
            raise DimensionMismatchError(f"gbuf/{i:06d}.mvd dims disagree with manifest")
        blocks = _read_vector_field(root / f"gbuf/{i:06d}.mvb", 2)
        if blocks.shape[:2] != (h // BLOCK_SIZE, w // BLOCK_SIZE):
            raise DimensionMismatchError(f"gbuf/{i:06d}.mvb dims disagree with manifest")
        stencil = np.asarray(Image.open(root / f"gbuf/{i:06d}.stencil.png"))
        if stencil.shape != (h, w):
            raise DimensionMismatchError(f"gbuf/{i:06d}.stencil.png dims disagree with manifest")
        gbuffers.append(GBufferSet(
            motion_dense=dense,
            motion_blocks=blocks,
            stencil=stencil,
            world_normal=_read_triples(root / f"gbuf/{i:06d}.normal.bin", b"NRM1", h, w),
            world_position=_read_triples(root / f"gbuf/{i:06d}.wpos.bin", b"WPS1", h, w),
        ))
    return frames, gbuffers


def load_episode(path) -> Episode:
    manifest = load_manifest(path)
    frames, gbuffers = load_dataset(path)
    return Episode(frames=frames, gbuffers=gbuffers,
                   base_fps=manifest["base_fps"], rng_seed=manifest["rng_seed"])
