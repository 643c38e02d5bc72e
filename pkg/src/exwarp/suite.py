"""Built-in scene family presets spanning static to high motion.

Four families cover the regimes the decision predictor has to tell apart:

    static  objects and camera at rest; every synthesis path is exact
    glide   slow constant drift; small disocclusion trails
    rush    fast drift plus a strong camera pan; large fresh disocclusions
    swing   sinusoidal (accelerating) object motion; stale-velocity warps
            and extrapolations both mispredict, in different amounts

Episode specs are derived deterministically from (family, index, base seed).
"""

from __future__ import annotations

import numpy as np

from .dataset import Episode
from .errors import ValidationError
from .scenegen import (BackgroundSpec, CameraSpec, LinearPath, ObjectSpec,
                       PiecewiseLinearPath, SceneSpec, SinusoidalPath,
                       render_episode)
from .training import SceneFamily

FAMILY_NAMES = ("static", "glide", "rush", "swing")


def _ping_pong_path(rng, cx, cy, speed, episode_len, leg_frames=8.0):
    """Constant-speed shuttle between two points, bouncing every leg_frames;
    keeps fast objects inside the frame for arbitrarily long episodes."""
    angle = rng.uniform(0, 2 * np.pi)
    dx = speed * leg_frames * np.cos(angle)
    dy = speed * leg_frames * np.sin(angle)
    p0 = (cx - dx / 2.0, cy - dy / 2.0)
    p1 = (cx + dx / 2.0, cy + dy / 2.0)
    knots = []
    t = -2.0 * leg_frames
    i = 0
    while t <= episode_len + 2.0 * leg_frames:
        knots.append((t, p0 if i % 2 == 0 else p1))
        t += leg_frames
        i += 1
    return PiecewiseLinearPath(knots=tuple(knots))


def _seed_for(base_seed: int, family: str, index: int) -> int:
    ss = np.random.SeedSequence([base_seed, FAMILY_NAMES.index(family), index])
    return int(ss.generate_state(1)[0])


def _random_objects(rng, n, width, height, speed_lo, speed_hi, sizes=(12, 24),
                    motion="linear", carrier=(0.0, 0.0), episode_len=20):
    """Objects with random shape/size/placement. `motion` picks the path kind;
    `carrier` adds a shared drift (used to keep objects in view while the
    camera pans)."""
    objects = []
    for i in range(n):
        shape = ("rect", "circle", "textured-sprite")[int(rng.integers(3))]
        size = float(rng.integers(sizes[0], sizes[1] + 1))
        cx = float(rng.uniform(size / 2, width - size / 2))
        cy = float(rng.uniform(size / 2, height - size / 2))
        angle = rng.uniform(0, 2 * np.pi)
        if motion == "sinusoidal":
            amp = rng.uniform(speed_lo, speed_hi)
            traj = SinusoidalPath(
                center=(cx, cy),
                amplitude=(float(amp * np.cos(angle)), float(amp * np.sin(angle))),
                period=float(rng.uniform(6.0, 10.0)),
                phase=float(rng.uniform(0, 2 * np.pi)),
            )
        elif motion == "ping-pong":
            traj = _ping_pong_path(rng, cx, cy, float(rng.uniform(speed_lo, speed_hi)),
                                   episode_len)
        else:
            speed = rng.uniform(speed_lo, speed_hi)
            traj = LinearPath(
                start=(cx, cy),
                velocity=(carrier[0] + float(speed * np.cos(angle)),
                          carrier[1] + float(speed * np.sin(angle))),
            )
        objects.append(ObjectSpec(
            shape=shape,
            size=size,
            trajectory=traj,
            depth=float(rng.uniform(20.0, 400.0)),
            object_id=i + 1,
            normal_profile="spherical" if i % 2 == 0 else "flat",
        ))
    return tuple(objects)


def family_spec(family: str, index: int = 0, *, base_seed: int = 0,
                width: int = 96, height: int = 64, episode_len: int = 20,
                base_fps: int = 30) -> SceneSpec:
    """One episode's scene description for the named family."""
    if family not in FAMILY_NAMES:
        raise ValidationError(f"unknown scene family {family!r}; expected {FAMILY_NAMES}")
    seed = _seed_for(base_seed, family, index)
    rng = np.random.default_rng(seed)
    background = BackgroundSpec("textured-noise", seed=int(rng.integers(1 << 16)))
    camera = CameraSpec()
    if family == "static":
        objects = _random_objects(rng, 2, width, height, 0.0, 0.0)
    elif family == "glide":
        objects = _random_objects(rng, 3, width, height, 6.0, 12.0, sizes=(20, 36),
                                  motion="ping-pong", episode_len=episode_len)
    elif family == "rush":
        # Objects ride along with the pan so they stay in view while the
        # background sweeps past underneath them.
        camera = CameraSpec(pan_velocity=(40.0, 32.0))
        objects = _random_objects(rng, 3, width, height, 4.0, 10.0,
                                  carrier=camera.pan_velocity)
    else:  # swing
        objects = _random_objects(rng, 3, width, height, 16.0, 32.0,
                                  motion="sinusoidal")
    return SceneSpec(
        width=width, height=height, episode_len=episode_len, base_fps=base_fps,
        background=background, objects=objects, camera=camera, rng_seed=seed,
    )


def render_family(family: str, episodes: int, **kwargs) -> SceneFamily:
    """Render a family's episodes in memory."""
    eps = []
    for i in range(episodes):
        spec = family_spec(family, i, **kwargs)
        frames, gbuffers = render_episode(spec)
        eps.append(Episode(frames=frames, gbuffers=gbuffers,
                           base_fps=spec.base_fps, rng_seed=spec.rng_seed))
    return SceneFamily(name=family, episodes=eps)


def speed_sweep_spec(speed: float, *, base_seed: int = 0, width: int = 96,
                     height: int = 64, episode_len: int = 12,
                     base_fps: int = 30) -> SceneSpec:
    """Single textured scene whose one object shuttles at the given
    px/base-frame speed; used for feature-vs-quality correlation sweeps.
    A bouncing path keeps the object in frame at any speed."""
    seed = int(np.random.SeedSequence([base_seed, 991]).generate_state(1)[0])
    cx, cy = width * 0.5, height * 0.5
    if speed == 0.0:
        traj = LinearPath(start=(cx, cy))
    else:
        # Shuttle horizontally across a fixed span; leg time scales with
        # 1/speed so |velocity| is exactly `speed` everywhere.
        span = width * 0.4
        leg = span / speed
        knots = []
        t = -2.0 * leg
        i = 0
        while t <= episode_len + 2.0 * leg:
            knots.append((t, (cx - span / 2 if i % 2 == 0 else cx + span / 2, cy)))
            t += leg
            i += 1
        traj = PiecewiseLinearPath(knots=tuple(knots))
    obj = ObjectSpec(shape="rect", size=20.0, trajectory=traj,
                     depth=50.0, object_id=1, normal_profile="spherical")
    return SceneSpec(width=width, height=height, episode_len=episode_len,
                     base_fps=base_fps,
                     background=BackgroundSpec("textured-noise", seed=seed & 0xFFFF),
                     objects=(obj,), camera=CameraSpec(), rng_seed=seed)
