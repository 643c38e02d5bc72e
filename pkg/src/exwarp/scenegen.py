"""Synthetic scene generation.

Renders parametric 2.5D scenes (moving shapes over a procedural background,
with camera pan/zoom) at four times the base frame rate, producing the
ground-truth frame for every quarter-slot plus per-base-frame G-buffers:
dense and block motion vectors, an object-id stencil, world normals, and
world positions. All output is a pure function of the scene description,
so two renders of the same spec are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

BLOCK_SIZE = 16
# Scene-unit depth conventions: objects must sit nearer than the background.
BACKGROUND_DEPTH = 512.0
DEPTH_RANGE = 1024.0

BACKGROUND_KINDS = ("flat", "gradient", "textured-noise")
OBJECT_SHAPES = ("rect", "circle", "textured-sprite")
NORMAL_PROFILES = ("flat", "spherical")


# ---------------------------------------------------------------------------
# Trajectories (positions in world pixels, time in base frames)

@dataclass(frozen=True)
class LinearPath:
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)  # px per base frame

    def position(self, tau: float) -> tuple[float, float]:
        return (self.start[0] + self.velocity[0] * tau,
                self.start[1] + self.velocity[1] * tau)


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Linear interpolation through (time, position) knots.

    Outside the knot span the first/last segment is extended, so the path
    stays defined for any time the episode asks about.
    """

    knots: tuple[tuple[float, tuple[float, float]], ...]

    def __post_init__(self):
        if len(self.knots) < 2:
            raise ValidationError("piecewise path needs at least 2 knots")
        times = [t for t, _ in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("piecewise path knot times must strictly increase")

    def position(self, tau: float) -> tuple[float, float]:
        ts = [t for t, _ in self.knots]
        idx = min(max(np.searchsorted(ts, tau) - 1, 0), len(ts) - 2)
        (t0, p0), (t1, p1) = self.knots[idx], self.knots[idx + 1]
        a = (tau - t0) / (t1 - t0)
        return (p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1]))


@dataclass(frozen=True)
class SinusoidalPath:
    center: tuple[float, float]
    amplitude: tuple[float, float]
    period: float  # base frames per cycle
    phase: float = 0.0

    def position(self, tau: float) -> tuple[float, float]:
        s = math.sin(2.0 * math.pi * tau / self.period + self.phase)
        return (self.center[0] + self.amplitude[0] * s,
                self.center[1] + self.amplitude[1] * s)


# ---------------------------------------------------------------------------
# Scene description

@dataclass(frozen=True)
class ObjectSpec:
    shape: str                      # rect | circle | textured-sprite
    size: float                     # px (square side / circle diameter)
    trajectory: object              # anything with .position(tau)
    depth: float                    # scene units, smaller = nearer
    object_id: int                  # 1..255; 0 is the static background
    normal_profile: str = "flat"    # flat | spherical


@dataclass(frozen=True)
class CameraSpec:
    pan_velocity: tuple[float, float] = (0.0, 0.0)  # px per base frame
    zoom_rate: float = 1.0                          # scale per base frame


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "textured-noise"
    seed: int = 0


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    episode_len: int                # base frames
    base_fps: int = 30
    background: BackgroundSpec = BackgroundSpec()
    objects: tuple[ObjectSpec, ...] = ()
    camera: CameraSpec = CameraSpec()
    rng_seed: int = 0

    def validate(self) -> None:
        """Raise ValidationError listing every violated invariant."""
        bad = []
        for name, v in (("width", self.width), ("height", self.height)):
            if v <= 0 or v % BLOCK_SIZE != 0:
                bad.append(f"{name}={v} must be a positive multiple of {BLOCK_SIZE}")
        if self.episode_len < 4:
            bad.append(f"episode_len={self.episode_len} must be >= 4")
        if self.base_fps <= 0:
            bad.append(f"base_fps={self.base_fps} must be positive")
        if self.background.kind not in BACKGROUND_KINDS:
            bad.append(f"background.kind={self.background.kind!r} not one of {BACKGROUND_KINDS}")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            bad.append("object_id values must be unique per scene")
        for o in self.objects:
            if not (1 <= o.object_id <= 255):
                bad.append(f"object_id={o.object_id} must be in 1..255")
            if o.size <= 0:
                bad.append(f"object {o.object_id}: size={o.size} must be positive")
            if not (0.0 < o.depth < BACKGROUND_DEPTH):
                bad.append(f"object {o.object_id}: depth={o.depth} outside (0, {BACKGROUND_DEPTH})")
            if o.shape not in OBJECT_SHAPES:
                bad.append(f"object {o.object_id}: shape={o.shape!r} not one of {OBJECT_SHAPES}")
            if o.normal_profile not in NORMAL_PROFILES:
                bad.append(f"object {o.object_id}: normal_profile={o.normal_profile!r} invalid")
            if not hasattr(o.trajectory, "position"):
                bad.append(f"object {o.object_id}: trajectory has no position(tau)")
        # Camera bound: at most half the frame may disocclude per quarter-slot.
        px, py = self.camera.pan_velocity
        if abs(px) / 4.0 > self.width / 2 or abs(py) / 4.0 > self.height / 2:
            bad.append(f"camera.pan_velocity={self.camera.pan_velocity} pans more than "
                       "half the frame per quarter-slot")
        if not (0.8 <= self.camera.zoom_rate <= 1.25):
            bad.append(f"camera.zoom_rate={self.camera.zoom_rate} outside [0.8, 1.25]")
        if bad:
            raise ValidationError(bad)

    @property
    def quarter_count(self) -> int:
        return 4 * self.episode_len - 3


@dataclass(frozen=True)
class Frame:
    """One displayable 8-bit RGB raster at a quarter-slot timestamp."""

    pixels: np.ndarray      # (H, W, 3) uint8
    timestamp: int          # quarter-slot index; base frames at multiples of 4


@dataclass(frozen=True)
class GBufferSet:
    """Auxiliary rasters for one base frame."""

    motion_dense: np.ndarray    # (H, W, 2) float32, px per quarter-slot (dx, dy)
    motion_blocks: np.ndarray   # (H/16, W/16, 2) float32, per-block mean
    stencil: np.ndarray         # (H, W) uint8 object ids, 0 = background
    world_normal: np.ndarray    # (H, W, 3) float32, unit vectors
    world_position: np.ndarray  # (H, W, 3) float32: world x, world y, depth

    @property
    def depth(self) -> np.ndarray:
        return self.world_position[..., 2]


# ---------------------------------------------------------------------------
# Procedural textures

def _hash_lattice(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic pseudo-random value in [0, 1) per integer lattice point."""
    seed_term = (seed * 1442695040888963407) % (1 << 64)
    # via int64 so negative lattice coords wrap deterministically
    h = (ix.astype(np.int64).astype(np.uint64) * np.uint64(374761393)
         + iy.astype(np.int64).astype(np.uint64) * np.uint64(668265263)
         + np.uint64(seed_term))
    h = (h ^ (h >> np.uint64(13))) * np.uint64(1274126177)
    h = h ^ (h >> np.uint64(16))
    return (h & np.uint64(0xFFFFFF)).astype(np.float64) / float(0x1000000)


def _value_noise(wx: np.ndarray, wy: np.ndarray, scale: float, seed: int) -> np.ndarray:
    """Bilinear value noise over a lattice with the given spacing, in [0, 1)."""
    x = wx / scale
    y = wy / scale
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    v00 = _hash_lattice(x0, y0, seed)
    v10 = _hash_lattice(x0 + 1, y0, seed)
    v01 = _hash_lattice(x0, y0 + 1, seed)
    v11 = _hash_lattice(x0 + 1, y0 + 1, seed)
    top = v00 + (v10 - v00) * fx
    bot = v01 + (v11 - v01) * fx
    return top + (bot - top) * fy


def _background_rgb(spec: SceneSpec, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
    kind = spec.background.kind
    seed = spec.background.seed
    out = np.empty(wx.shape + (3,), dtype=np.float64)
    if kind == "flat":
        rng = np.random.default_rng(seed)
        out[:] = rng.integers(60, 200, size=3)
    elif kind == "gradient":
        # Smooth long-period ramps; bounded however far the camera pans.
        for c, (ax, ay, ph) in enumerate(((1.0, 0.3, 0.0), (0.4, 1.0, 2.1), (0.7, 0.7, 4.2))):
            arg = 2.0 * math.pi * (wx * ax + wy * ay) / 480.0 + ph + seed
            out[..., c] = 128.0 + 96.0 * np.sin(arg)
    else:  # textured-noise: two octaves of value noise per channel; the fine
        # octave is near pixel scale so misplaced content costs real error
        for c in range(3):
            coarse = _value_noise(wx, wy, 9.0, seed * 3 + c)
            fine = _value_noise(wx, wy, 2.0, seed * 3 + c + 1000)
            out[..., c] = 255.0 * (0.5 * coarse + 0.5 * fine)
    return out


def _object_colors(spec: SceneSpec) -> dict[int, np.ndarray]:
    rng = np.random.default_rng(spec.rng_seed ^ 0x5EED)
    return {o.object_id: rng.integers(40, 256, size=3).astype(np.float64)
            for o in spec.objects}


# ---------------------------------------------------------------------------
# Camera model

def _camera_params(spec: SceneSpec, tau: float):
    z = spec.camera.zoom_rate ** tau
    ox = spec.camera.pan_velocity[0] * tau
    oy = spec.camera.pan_velocity[1] * tau
    cx = spec.width / 2.0
    cy = spec.height / 2.0
    return z, ox, oy, cx, cy


def _screen_to_world(spec: SceneSpec, tau: float, sx: np.ndarray, sy: np.ndarray):
    z, ox, oy, cx, cy = _camera_params(spec, tau)
    return (sx - cx) / z + cx + ox, (sy - cy) / z + cy + oy


def _world_to_screen(spec: SceneSpec, tau: float, wx: np.ndarray, wy: np.ndarray):
    z, ox, oy, cx, cy = _camera_params(spec, tau)
    return (wx - ox - cx) * z + cx, (wy - oy - cy) * z + cy


# ---------------------------------------------------------------------------
# Rasterization

def _paint_order(objects) -> list[ObjectSpec]:
    # Painter's order far-to-near; equal depth resolved so the lower id
    # is painted last and wins.
    return sorted(objects, key=lambda o: (-o.depth, -o.object_id))


def _rasterize(spec: SceneSpec, tau: float, colors: dict[int, np.ndarray]):
    h, w = spec.height, spec.width
    sy, sx = np.mgrid[0:h, 0:w].astype(np.float64)
    wx, wy = _screen_to_world(spec, tau, sx, sy)

    rgb = _background_rgb(spec, wx, wy)
    stencil = np.zeros((h, w), dtype=np.uint8)
    depth = np.full((h, w), BACKGROUND_DEPTH, dtype=np.float64)
    normal = np.zeros((h, w, 3), dtype=np.float64)
    normal[..., 2] = 1.0

    for obj in _paint_order(spec.objects):
        px, py = obj.trajectory.position(tau)
        half = obj.size / 2.0
        dx = wx - px
        dy = wy - py
        # Half-open extents so an aligned object of size s covers exactly s px.
        if obj.shape == "circle":
            mask = dx * dx + dy * dy < half * half
        else:
            mask = (dx >= -half) & (dx < half) & (dy >= -half) & (dy < half)
        if not mask.any():
            continue
        if obj.shape == "textured-sprite":
            tex = np.empty((int(mask.sum()), 3), dtype=np.float64)
            for c in range(3):
                tex[:, c] = 255.0 * _value_noise(dx[mask], dy[mask], 3.0,
                                                 spec.rng_seed * 7 + obj.object_id * 31 + c)
            rgb[mask] = tex
        else:
            rgb[mask] = colors[obj.object_id]
        stencil[mask] = obj.object_id
        depth[mask] = obj.depth
        if obj.normal_profile == "spherical":
            u = dx[mask] / half
            v = dy[mask] / half
            rad2 = u * u + v * v
            nz = np.sqrt(np.clip(1.0 - rad2, 0.0, 1.0))
            over = rad2 > 1.0
            if over.any():
                norm = np.sqrt(rad2[over])
                u[over] /= norm
                v[over] /= norm
            normal[mask] = np.stack([u, v, nz], axis=-1)
        else:
            normal[mask] = (0.0, 0.0, 1.0)

    pixels = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    wpos = np.stack([wx, wy, depth], axis=-1).astype(np.float32)
    return pixels, stencil, depth, normal.astype(np.float32), wpos


def _motion_dense(spec: SceneSpec, t: int, stencil: np.ndarray,
                  wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
    """Per-quarter-slot screen displacement ending at base frame t.

    Defined backward: a pixel's position in the previous base frame is
    p - 4 * motion[p]. Object pixels track their surface point; background
    pixels track the fixed world point through the camera.
    """
    h, w = stencil.shape
    # World position of each pixel's surface point one base frame earlier.
    shift_x = np.zeros(256)
    shift_y = np.zeros(256)
    for obj in spec.objects:
        x1, y1 = obj.trajectory.position(float(t))
        x0, y0 = obj.trajectory.position(float(t - 1))
        shift_x[obj.object_id] = x1 - x0
        shift_y[obj.object_id] = y1 - y0
    prev_wx = wx - shift_x[stencil]
    prev_wy = wy - shift_y[stencil]
    prev_sx, prev_sy = _world_to_screen(spec, float(t - 1), prev_wx, prev_wy)
    sy, sx = np.mgrid[0:h, 0:w].astype(np.float64)
    motion = np.stack([(sx - prev_sx) / 4.0, (sy - prev_sy) / 4.0], axis=-1)
    return motion.astype(np.float32)


def block_reduce_motion(motion_dense: np.ndarray) -> np.ndarray:
    """Mean motion per 16x16 tile."""
    h, w, _ = motion_dense.shape
    tiles = motion_dense.astype(np.float64).reshape(
        h // BLOCK_SIZE, BLOCK_SIZE, w // BLOCK_SIZE, BLOCK_SIZE, 2)
    return tiles.mean(axis=(1, 3)).astype(np.float32)


def render_episode(spec: SceneSpec) -> tuple[list[Frame], list[GBufferSet]]:
    """Render ground truth for every quarter-slot plus per-base-frame G-buffers.

    Returns 4*episode_len-3 frames (timestamps 0..4*(episode_len-1)) and one
    GBufferSet per base frame. Deterministic given the spec.
    """
    spec.validate()
    colors = _object_colors(spec)
    frames: list[Frame] = []
    gbuffers: list[GBufferSet] = []
    for q in range(spec.quarter_count):
        tau = q / 4.0
        pixels, stencil, depth, normal, wpos = _rasterize(spec, tau, colors)
        frames.append(Frame(pixels=pixels, timestamp=q))
        if q % 4 == 0:
            t = q // 4
            wx = wpos[..., 0].astype(np.float64)
            wy = wpos[..., 1].astype(np.float64)
            dense = _motion_dense(spec, t, stencil, wx, wy)
            gbuffers.append(GBufferSet(
                motion_dense=dense,
                motion_blocks=block_reduce_motion(dense),
                stencil=stencil,
                world_normal=normal,
                world_position=wpos,
            ))
    return frames, gbuffers
