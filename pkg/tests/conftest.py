import numpy as np
import pytest

from exwarp.dataset import Episode
from exwarp.scenegen import (BackgroundSpec, CameraSpec, LinearPath, ObjectSpec,
                             SceneSpec, render_episode)


def make_scene(width=64, height=64, episode_len=8, objects=(), camera=None,
               background=None, seed=3):
    return SceneSpec(
        width=width, height=height, episode_len=episode_len,
        background=background or BackgroundSpec("textured-noise", 7),
        objects=tuple(objects),
        camera=camera or CameraSpec(),
        rng_seed=seed,
    )


def moving_rect(velocity=(8.0, 0.0), size=16, start=(24.0, 32.0), object_id=1,
                depth=50.0, normal="spherical"):
    return ObjectSpec(shape="rect", size=size,
                      trajectory=LinearPath(start=start, velocity=velocity),
                      depth=depth, object_id=object_id, normal_profile=normal)


@pytest.fixture(scope="session")
def drift_episode():
    """One rect moving +8 px/base-frame over textured noise."""
    spec = make_scene(objects=[moving_rect()], episode_len=8)
    frames, gbuffers = render_episode(spec)
    return Episode(frames=frames, gbuffers=gbuffers, base_fps=30, rng_seed=spec.rng_seed)


@pytest.fixture(scope="session")
def static_episode():
    spec = make_scene(objects=[moving_rect(velocity=(0.0, 0.0))], episode_len=6)
    frames, gbuffers = render_episode(spec)
    return Episode(frames=frames, gbuffers=gbuffers, base_fps=30, rng_seed=spec.rng_seed)
