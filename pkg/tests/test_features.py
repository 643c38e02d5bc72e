import numpy as np
import pytest

from conftest import make_scene, moving_rect
from exwarp import metrics
from exwarp.errors import DimensionMismatchError
from exwarp.features import (EMD_BINS, STATE_LEN, EnvVector, NormScales,
                             StateVector, TemporalVector, assemble_state,
                             buffer_emd, count_dynamic_objects, env_vector,
                             motion_variance, normal_ranges, normalized_env)
from exwarp.scenegen import render_episode
from exwarp.scheduler import episode_env_vectors
from exwarp.warp import warp_frame


# ---------------------------------------------------------------------------
# motion_variance

def test_variance_of_constant_field_is_zero():
    blocks = np.full((4, 4, 2), (3.0, -1.0), dtype=np.float32)
    assert motion_variance(blocks) == (0.0, 0.0)


def test_variance_hand_computed():
    blocks = np.zeros((2, 2, 2), dtype=np.float32)
    blocks[..., 0] = np.array([[0.0, 0.0], [4.0, 4.0]])
    var_x, var_y = motion_variance(blocks)
    assert var_x == pytest.approx(4.0)   # population variance of {0,0,4,4}
    assert var_y == 0.0


def test_variance_singleton_block():
    assert motion_variance(np.full((1, 1, 2), 2.5)) == (0.0, 0.0)


def test_static_scene_zero_variance(static_episode):
    for gb in static_episode.gbuffers:
        assert motion_variance(gb.motion_blocks) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# buffer_emd

def test_emd_identical_buffers():
    rng = np.random.default_rng(1)
    buf = rng.uniform(-1, 1, size=(16, 16, 3))
    assert buffer_emd(buf, buf, normal_ranges()) == 0.0


def test_emd_two_spike_closed_form():
    # All mass in bin 0 vs all in bin 1: distance is exactly one bin width.
    lo, hi = 0.0, float(EMD_BINS)      # bin width 1.0
    a = np.full((8, 8), 0.5)
    b = np.full((8, 8), 1.5)
    assert buffer_emd(a, b, (lo, hi)) == pytest.approx(1.0)


def test_emd_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.uniform(-1, 1, size=(12, 12, 3))
        b = rng.uniform(-1, 1, size=(12, 12, 3))
        assert buffer_emd(a, b, normal_ranges()) == pytest.approx(
            buffer_emd(b, a, normal_ranges()), abs=1e-12)


def test_emd_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        buffer_emd(np.zeros((4, 4)), np.zeros((5, 5)), (0.0, 1.0))


def test_emd_scales_with_shift():
    # A full-range shift moves more mass further than a one-bin shift.
    a = np.full((8, 8), 1.0)
    near = np.full((8, 8), 3.0)
    far = np.full((8, 8), 60.0)
    r = (0.0, 64.0)
    assert buffer_emd(a, far, r) > buffer_emd(a, near, r)


# ---------------------------------------------------------------------------
# count_dynamic_objects

def flood_fill_count(stencil, min_area=4):
    """Brute-force 4-connected component count over nonzero pixels."""
    seen = np.zeros(stencil.shape, dtype=bool)
    count = 0
    for sy in range(stencil.shape[0]):
        for sx in range(stencil.shape[1]):
            if stencil[sy, sx] == 0 or seen[sy, sx]:
                continue
            stack = [(sy, sx)]
            seen[sy, sx] = True
            area = 0
            while stack:
                y, x = stack.pop()
                area += 1
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ny, nx = y + dy, x + dx
                    if (0 <= ny < stencil.shape[0] and 0 <= nx < stencil.shape[1]
                            and stencil[ny, nx] != 0 and not seen[ny, nx]):
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            if area >= min_area:
                count += 1
    return count


def test_count_empty_stencil():
    assert count_dynamic_objects(np.zeros((32, 32), dtype=np.uint8)) == 0


def test_count_two_disjoint_blobs():
    st = np.zeros((32, 32), dtype=np.uint8)
    st[2:12, 2:12] = 1
    st[20:30, 20:30] = 2
    assert count_dynamic_objects(st) == 2


def test_touching_blobs_merge():
    st = np.zeros((16, 16), dtype=np.uint8)
    st[4:8, 4:8] = 1
    st[8:12, 4:8] = 2      # shares a 4-connected edge with the first blob
    assert count_dynamic_objects(st) == 1


def test_speckle_below_area_floor_ignored():
    st = np.zeros((16, 16), dtype=np.uint8)
    st[2, 2] = 1
    st[5, 5] = 1
    st[5, 6] = 1
    st[10:13, 10:13] = 2   # 9 px, counted
    assert count_dynamic_objects(st) == 1


def test_count_matches_flood_fill_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        st = (rng.random((24, 24)) < 0.25).astype(np.uint8) * 5
        assert count_dynamic_objects(st) == flood_fill_count(st)


def test_count_matches_visible_objects(static_episode):
    assert count_dynamic_objects(static_episode.gbuffers[0].stencil) == 1


# ---------------------------------------------------------------------------
# State assembly and fixed point

def test_zero_history_is_zero_state():
    sv = assemble_state([None, None, None, None])
    assert np.all(sv.raw == 0)
    assert sv.decode().shape == (STATE_LEN,)


def test_history_order_matters():
    env_a = EnvVector(n_d=1, emd_wn=0.0, emd_wp=0.0, var_x=0.0, var_y=0.0, r=1.0)
    env_b = EnvVector(n_d=2, emd_wn=0.0, emd_wp=0.0, var_x=0.0, var_y=0.0, r=1.0)
    t = TemporalVector.for_node("d1")
    fwd = assemble_state([(env_a, t), (env_b, t), None, None])
    rev = assemble_state([(env_b, t), (env_a, t), None, None])
    assert fwd != rev


def test_fixed_point_round_trip():
    rng = np.random.default_rng(4)
    values = rng.uniform(0, 4, size=STATE_LEN)
    sv = StateVector.encode(values)
    assert np.abs(sv.decode() - values).max() <= 2 ** -16


def test_state_layout_newest_first():
    env = EnvVector(n_d=16, emd_wn=0.0, emd_wp=0.0, var_x=0.0, var_y=0.0, r=0.0)
    sv = assemble_state([(env, TemporalVector.for_node("d2")), None, None, None],
                        NormScales())
    decoded = sv.decode()
    assert decoded[0] == pytest.approx(1.0)        # n_d / 16
    assert decoded[6 + 1] == pytest.approx(1.0)    # one-hot slot for d2
    assert np.all(decoded[11:] == 0)


def test_temporal_one_hot_is_exactly_one():
    for i, name in enumerate(("d1", "d2", "d3", "d4", "d5")):
        v = TemporalVector.for_node(name).one_hot()
        assert v.sum() == 1.0 and v[i] == 1.0
    with pytest.raises(ValueError):
        TemporalVector(5)


def test_assemble_requires_four_entries():
    with pytest.raises(DimensionMismatchError):
        assemble_state([None, None, None])


def test_normalization_clamps():
    env = EnvVector(n_d=1000, emd_wn=100.0, emd_wp=1e6, var_x=1e6, var_y=0.0, r=1.0)
    vals = normalized_env(env, NormScales())
    assert vals.max() <= 4.0
    assert vals.min() >= 0.0


def test_env_vectors_deterministic(drift_episode):
    a = episode_env_vectors(drift_episode)
    b = episode_env_vectors(drift_episode)
    assert a == b


def test_env_vector_em_terms_zero_without_history(drift_episode):
    gb = drift_episode.gbuffers[0]
    env = env_vector(gb, None, drift_episode.width, drift_episode.height)
    assert env.emd_wn == 0.0 and env.emd_wp == 0.0
    assert env.r == drift_episode.width * drift_episode.height


# ---------------------------------------------------------------------------
# Feature/quality correlation (small version; full sweep in acceptance)

def test_variance_up_warp_quality_down():
    from exwarp.suite import speed_sweep_spec
    var_means, psnr_means = [], []
    for speed in (0.0, 8.0, 24.0):
        spec = speed_sweep_spec(speed, episode_len=6)
        frames, gbuffers = render_episode(spec)
        vs, ps = [], []
        for t in range(1, 5):
            gb = gbuffers[t]
            vs.append(motion_variance(gb.motion_blocks)[0])
            warped = warp_frame(frames[4 * t], gb.motion_dense, 1, gb.depth)
            ps.append(metrics.psnr(warped, frames[4 * t + 1]))
        var_means.append(np.mean(vs))
        psnr_means.append(np.mean(ps))
    assert var_means[0] <= var_means[1] <= var_means[2]
    assert psnr_means[0] >= psnr_means[1] >= psnr_means[2]
