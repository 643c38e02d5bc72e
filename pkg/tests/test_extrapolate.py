import numpy as np
import pytest

from conftest import make_scene, moving_rect
from exwarp import metrics
from exwarp.errors import ValidationError
from exwarp.extrapolate import (LatencyModel, StageLatency, default_latency_model,
                                extrapolate_frame, resolution_class_for,
                                total_latency)
from exwarp.scenegen import render_episode
from exwarp.warp import warp_frame


def _history(episode, t):
    return [(episode.frames[4 * (t - 2)], episode.gbuffers[t - 2]),
            (episode.frames[4 * (t - 1)], episode.gbuffers[t - 1]),
            (episode.frames[4 * t], episode.gbuffers[t])]


# ---------------------------------------------------------------------------
# Latency model

def test_latency_sums_match_published_table():
    model = default_latency_model()
    assert total_latency(model, "480p") == 0.95 + 1.94 + 3.67
    assert abs(total_latency(model, "480p") - 6.56) < 1e-9
    assert total_latency(model, "1080p") == 2.91 + 4.63 + 13.78
    assert abs(total_latency(model, "1080p") - 21.32) < 1e-9


def test_gbuffer_cost_not_charged():
    model = default_latency_model()
    st = model.classes["480p"]
    assert total_latency(model, "480p") == st.warp_ms + st.hole_mark_ms + st.inference_ms


def test_zero_latency_rejected():
    with pytest.raises(ValidationError):
        LatencyModel(classes={"480p": StageLatency(0.0, 1.0, 1.0, 1.0)})


def test_unknown_resolution_class():
    with pytest.raises(ValidationError):
        total_latency(default_latency_model(), "4k")


def test_resolution_class_mapping():
    assert resolution_class_for(64) == "480p"
    assert resolution_class_for(480) == "480p"
    assert resolution_class_for(720) == "720p"
    assert resolution_class_for(1080) == "1080p"


# ---------------------------------------------------------------------------
# Extrapolation

def test_static_scene_reproduces_newest_frame(static_episode):
    out = extrapolate_frame(_history(static_episode, 2), 2)
    assert np.array_equal(out.pixels, static_episode.frames[8].pixels)


def test_beats_nearest_fill_warping_on_disocclusions(drift_episode):
    ep = drift_episode
    t = 3
    gt = ep.frames[4 * t + 2]
    gb = ep.gbuffers[t]
    warped = warp_frame(ep.frames[4 * t], gb.motion_dense, 2, gb.depth)
    extra = extrapolate_frame(_history(ep, t), 2)
    assert metrics.psnr(extra.pixels, gt) > metrics.psnr(warped, gt)


def test_constant_velocity_mean_quality_ordering(drift_episode):
    ep = drift_episode
    w_scores, e_scores = [], []
    for t in range(2, ep.episode_len - 1):
        gt = ep.frames[4 * t + 2]
        gb = ep.gbuffers[t]
        warped = warp_frame(ep.frames[4 * t], gb.motion_dense, 2, gb.depth)
        extra = extrapolate_frame(_history(ep, t), 2)
        w_scores.append(metrics.psnr(warped, gt))
        e_scores.append(metrics.psnr(extra.pixels, gt))
    assert np.mean(e_scores) >= np.mean(w_scores)


def test_identical_history_degenerates_to_warp(drift_episode):
    ep = drift_episode
    frame, gb = ep.frames[8], ep.gbuffers[2]
    history = [(frame, gb), (frame, gb), (frame, gb)]
    out = extrapolate_frame(history, 1)
    warped = warp_frame(frame, gb.motion_dense, 1, gb.depth)
    outside = ~warped.hole_mask
    assert np.array_equal(out.pixels[outside], warped.pixels[outside])


def test_output_has_no_undefined_pixels():
    # Extreme pan: leading half of the frame is unfillable from history, so
    # the diffusion stage must close it.
    from exwarp.scenegen import CameraSpec
    spec = make_scene(objects=[], episode_len=5, width=32, height=32,
                      camera=CameraSpec(pan_velocity=(24.0, 0.0)))
    frames, gbuffers = render_episode(spec)
    history = [(frames[0], gbuffers[0]), (frames[4], gbuffers[1]), (frames[8], gbuffers[2])]
    out = extrapolate_frame(history, 3)
    assert out.pixels.shape == (32, 32, 3)
    assert out.pixels.dtype == np.uint8


def test_determinism(drift_episode):
    a = extrapolate_frame(_history(drift_episode, 3), 2)
    b = extrapolate_frame(_history(drift_episode, 3), 2)
    assert np.array_equal(a.pixels, b.pixels)


def test_available_at_honors_latency(drift_episode):
    history = _history(drift_episode, 2)
    # 480p: 6.56 ms within an 8.33 ms quarter-slot -> one slot later.
    out = extrapolate_frame(history, 2, issue_slot=8, resolution_class="480p")
    assert out.available_at == 9
    # 1080p: 21.32 ms -> three quarter-slots.
    out = extrapolate_frame(history, 2, issue_slot=8, resolution_class="1080p")
    assert out.available_at == 11
    assert out.available_at > 8


def test_requires_three_history_frames(drift_episode):
    with pytest.raises(ValidationError):
        extrapolate_frame(_history(drift_episode, 2)[:2], 2)
