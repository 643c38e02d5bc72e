"""Scene-state features and the 44-element predictor input vector.

Six per-frame environment features (dynamic object count, histogram EMD of
the world-normal and world-position buffers against the previous frame,
block motion variance per axis, and the pixel-count resolution scalar) are
combined with a 5-way decision-node one-hot; four such 11-element frame
states, newest first, form the fixed-point network input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError
from .scenegen import DEPTH_RANGE, GBufferSet

EMD_BINS = 64
MIN_OBJECT_AREA = 4  # connected components below this are speckle, not objects
STATE_LEN = 44
NODE_NAMES = ("d1", "d2", "d3", "d4", "d5")
FIXED_POINT_SCALE = 1 << 16  # Q16.16


@dataclass(frozen=True)
class EnvVector:
    n_d: int
    emd_wn: float
    emd_wp: float
    var_x: float
    var_y: float
    r: float


@dataclass(frozen=True)
class TemporalVector:
    """One-hot over the five decision nodes."""

    node_index: int

    def __post_init__(self):
        if not 0 <= self.node_index < len(NODE_NAMES):
            raise ValueError(f"node_index={self.node_index} outside 0..4")

    @classmethod
    def for_node(cls, name: str) -> "TemporalVector":
        return cls(NODE_NAMES.index(name))

    def one_hot(self) -> np.ndarray:
        v = np.zeros(len(NODE_NAMES))
        v[self.node_index] = 1.0
        return v


class StateVector:
    """44 Q16.16 fixed-point values; decodes back to floats within 2^-16."""

    __slots__ = ("raw",)

    def __init__(self, raw: np.ndarray):
        raw = np.asarray(raw, dtype=np.int32)
        if raw.shape != (STATE_LEN,):
            raise DimensionMismatchError(f"state vector must have {STATE_LEN} entries")
        self.raw = raw

    @classmethod
    def encode(cls, values) -> "StateVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (STATE_LEN,):
            raise DimensionMismatchError(f"state vector must have {STATE_LEN} entries")
        raw = np.clip(np.rint(values * FIXED_POINT_SCALE),
                      np.iinfo(np.int32).min, np.iinfo(np.int32).max)
        return cls(raw.astype(np.int32))

    def decode(self) -> np.ndarray:
        return self.raw.astype(np.float64) / FIXED_POINT_SCALE

    def __eq__(self, other):
        return isinstance(other, StateVector) and np.array_equal(self.raw, other.raw)


def motion_variance(blocks: np.ndarray) -> tuple[float, float]:
    """Population variance of the block motion buffer, per component."""
    if blocks.size == 0:
        raise ValueError("empty block buffer")
    flat = blocks.reshape(-1, 2).astype(np.float64)
    var = flat.var(axis=0)
    return float(var[0]), float(var[1])


def buffer_emd(current: np.ndarray, previous: np.ndarray, ranges) -> float:
    """Mean per-channel 1-D histogram EMD between two rasters.

    Per channel: 64-bin histogram over that channel's fixed (lo, hi) range,
    normalized to unit mass; the EMD is the L1 distance between cumulative
    histograms scaled by the bin width. `ranges` is one (lo, hi) pair per
    channel (or a single pair applied to all channels).
    """
    cur = np.asarray(current, dtype=np.float64)
    prev = np.asarray(previous, dtype=np.float64)
    if cur.shape != prev.shape:
        raise DimensionMismatchError(f"buffer shapes differ: {cur.shape} vs {prev.shape}")
    if cur.ndim == 2:
        cur = cur[..., None]
        prev = prev[..., None]
    channels = cur.shape[-1]
    if isinstance(ranges[0], (int, float)):
        ranges = [tuple(ranges)] * channels
    if len(ranges) != channels:
        raise DimensionMismatchError(f"{len(ranges)} ranges for {channels} channels")

    total = 0.0
    for c, (lo, hi) in enumerate(ranges):
        bin_width = (hi - lo) / EMD_BINS
        a = np.clip(cur[..., c], lo, hi)
        b = np.clip(prev[..., c], lo, hi)
        ha, _ = np.histogram(a, bins=EMD_BINS, range=(lo, hi))
        hb, _ = np.histogram(b, bins=EMD_BINS, range=(lo, hi))
        ca = np.cumsum(ha / ha.sum())
        cb = np.cumsum(hb / hb.sum())
        total += bin_width * float(np.abs(ca - cb).sum())
    return total / channels


def count_dynamic_objects(stencil: np.ndarray) -> int:
    """Number of 4-connected nonzero stencil components of at least 4 pixels."""
    labels, n = ndimage.label(stencil != 0)
    if n == 0:
        return 0
    sizes = np.bincount(labels.ravel())[1:]
    return int((sizes >= MIN_OBJECT_AREA).sum())


def normal_ranges():
    return ((-1.0, 1.0),) * 3


def wpos_ranges(width: int, height: int):
    """Histogram ranges for world-position buffers expressed relative to the
    current frame's window origin. World x/y are unbounded under camera pan,
    so the fixed range is anchored to the newest buffer: legal camera motion
    keeps the previous frame's coordinates within two frame spans."""
    return ((-2.0 * width, 3.0 * width), (-2.0 * height, 3.0 * height),
            (0.0, DEPTH_RANGE))


def wpos_emd(current: np.ndarray, previous: np.ndarray,
             width: int, height: int) -> float:
    anchor = np.array([current[..., 0].min(), current[..., 1].min(), 0.0])
    return buffer_emd(current - anchor, previous - anchor,
                      wpos_ranges(width, height))


def env_vector(gb: GBufferSet, prev_gb: GBufferSet | None,
               width: int, height: int) -> EnvVector:
    """Per-frame environment features; EMD terms are 0 when there is no
    previous frame to compare against."""
    var_x, var_y = motion_variance(gb.motion_blocks)
    if prev_gb is None:
        emd_wn = 0.0
        emd_wp = 0.0
    else:
        emd_wn = buffer_emd(gb.world_normal, prev_gb.world_normal, normal_ranges())
        emd_wp = wpos_emd(gb.world_position, prev_gb.world_position, width, height)
    return EnvVector(
        n_d=count_dynamic_objects(gb.stencil),
        emd_wn=emd_wn,
        emd_wp=emd_wp,
        var_x=var_x,
        var_y=var_y,
        r=float(width * height),
    )


@dataclass(frozen=True)
class NormScales:
    """Divisors applied before fixed-point encoding; results clamp to [0, 4].

    Bounded inputs keep the Q-learning targets stable. The divisors are sized
    so that typical desk-scale scene dynamics (quarter-slot motions of a few
    pixels) land in [0, ~1]: block-variance against a few px^2, the
    world-position EMD against a pixel-scale transport distance, the normal
    EMD against its observed per-frame magnitude, the resolution against a
    1080p pixel count, and the object count against 16.
    """

    n_d: float = 16.0
    emd_wn: float = 0.005
    emd_wp: float = 4.0
    var: float = 1.0
    r: float = 1920.0 * 1080.0
    clamp: float = 4.0

    @classmethod
    def for_resolution(cls, width: int, height: int) -> "NormScales":
        # Transport distances grow with the frame span; keep them comparable
        # across resolutions.
        return cls(emd_wp=max(width, height) / 24.0)


def normalized_env(env: EnvVector, scales: NormScales) -> np.ndarray:
    vals = np.array([
        env.n_d / scales.n_d,
        env.emd_wn / scales.emd_wn,
        env.emd_wp / scales.emd_wp,
        env.var_x / scales.var,
        env.var_y / scales.var,
        env.r / scales.r,
    ])
    return np.clip(vals, 0.0, scales.clamp)


def assemble_state(history, scales: NormScales | None = None) -> StateVector:
    """Build the 44-element input from 4 (EnvVector, TemporalVector) tuples,
    newest first. Entries may be None (start of episode): they contribute a
    zero environment and an all-zero temporal one-hot."""
    if len(history) != 4:
        raise DimensionMismatchError(f"need exactly 4 history entries, got {len(history)}")
    if scales is None:
        scales = NormScales()
    parts = []
    for entry in history:
        if entry is None:
            parts.append(np.zeros(11))
            continue
        env, temporal = entry
        tvec = temporal.one_hot() if temporal is not None else np.zeros(len(NODE_NAMES))
        parts.append(np.concatenate([normalized_env(env, scales), tvec]))
    return StateVector.encode(np.concatenate(parts))
