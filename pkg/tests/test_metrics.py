import math

import numpy as np
import pytest

from exwarp import metrics
from exwarp.errors import DimensionMismatchError
from exwarp.metrics import aggregate_report, psnr, ssim
from exwarp.scheduler import DecisionTrace, SlotDisplay


def _rand_frame(rng, h=32, w=32):
    return rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)


# ---------------------------------------------------------------------------
# PSNR

def test_psnr_identical_clamps_to_100():
    a = np.full((16, 16, 3), 77, dtype=np.uint8)
    assert psnr(a, a) == 100.0


def test_psnr_mse_one_closed_form():
    a = np.zeros((16, 16, 3), dtype=np.uint8)
    b = np.ones((16, 16, 3), dtype=np.uint8)
    assert abs(psnr(a, b) - 20.0 * math.log10(255.0)) < 1e-9
    assert abs(psnr(a, b) - 48.1308) < 1e-3


def psnr_oracle(a, b):
    # Plain scalar accumulation, no numpy reductions.
    total = 0.0
    count = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            for c in range(a.shape[2]):
                d = float(a[y, x, c]) - float(b[y, x, c])
                total += d * d
                count += 1
    mse = total / count
    if mse == 0.0:
        return 100.0
    return min(10.0 * math.log10(255.0 ** 2 / mse), 100.0)


def test_psnr_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = _rand_frame(rng, 16, 16)
        b = _rand_frame(rng, 16, 16)
        assert abs(psnr(a, b) - psnr_oracle(a, b)) < 1e-9


def test_psnr_decreases_with_noise_amplitude():
    rng = np.random.default_rng(6)
    base = _rand_frame(rng, 24, 24)
    values = []
    for amp in (2, 8, 24, 60):
        noisy = np.clip(base.astype(int) + rng.integers(-amp, amp + 1, base.shape), 0, 255)
        values.append(psnr(base, noisy.astype(np.uint8)))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_psnr_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        psnr(np.zeros((16, 16, 3), np.uint8), np.zeros((16, 32, 3), np.uint8))


# ---------------------------------------------------------------------------
# SSIM

def test_ssim_identity_is_exactly_one():
    rng = np.random.default_rng(7)
    a = _rand_frame(rng)
    assert ssim(a, a) == 1.0


def test_ssim_symmetric():
    rng = np.random.default_rng(8)
    a = _rand_frame(rng)
    b = _rand_frame(rng)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_constant_images_closed_form():
    # Zero variance leaves only the luminance term.
    mu_a, mu_b = 40.0, 90.0
    a = np.full((16, 16, 3), mu_a, dtype=np.uint8)
    b = np.full((16, 16, 3), mu_b, dtype=np.uint8)
    c1 = (0.01 * 255) ** 2
    expected = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-12)


def ssim_oracle(a, b):
    """Direct per-window evaluation of the SSIM definition."""
    x = a.astype(np.float64).mean(axis=2)
    y = b.astype(np.float64).mean(axis=2)
    r = 5
    coords = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(coords ** 2) / (2 * 1.5 ** 2))
    g = g / g.sum()
    w = np.outer(g, g)
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    vals = []
    for i in range(r, x.shape[0] - r):
        for j in range(r, x.shape[1] - r):
            wx = x[i - r:i + r + 1, j - r:j + r + 1]
            wy = y[i - r:i + r + 1, j - r:j + r + 1]
            mx = (w * wx).sum()
            my = (w * wy).sum()
            vx = (w * wx * wx).sum() - mx * mx
            vy = (w * wy * wy).sum() - my * my
            cov = (w * wx * wy).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(9)
    for _ in range(3):
        a = _rand_frame(rng, 24, 24)
        b = _rand_frame(rng, 24, 24)
        assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)


def test_ssim_bounded_on_random_inputs():
    rng = np.random.default_rng(10)
    for _ in range(5):
        v = ssim(_rand_frame(rng), _rand_frame(rng))
        assert -1.0 <= v <= 1.0


def test_ssim_rejects_small_frames():
    with pytest.raises(DimensionMismatchError):
        ssim(np.zeros((8, 8, 3), np.uint8), np.zeros((8, 8, 3), np.uint8))


# ---------------------------------------------------------------------------
# Aggregation

def _trace(scenario, psnrs, ssims, decisions, interval=0):
    displayed = [SlotDisplay(provenance="warped", is_repeat=False, psnr=p, ssim=s)
                 for p, s in zip(psnrs, ssims)]
    return DecisionTrace(interval_index=interval, decisions=decisions,
                         displayed=displayed,
                         dropped_slots=0, scenario=scenario)


def test_aggregate_singleton_equals_trace_means():
    tr = _trace("S6", [30.0, 40.0, 50.0], [0.8, 0.9, 1.0],
                [("d1", "warp"), ("d2", "warp"), ("d5", "warp")])
    rows = aggregate_report([tr], policy="p", base_fps=30)
    all_row = [r for r in rows if r["scenario"] == "all"][0]
    assert all_row["mean_psnr"] == pytest.approx(40.0)
    assert all_row["mean_ssim"] == pytest.approx(0.9)
    assert all_row["warp_ratio"] == 1.0
    assert all_row["count"] == 1


def test_aggregate_linearity_of_merging():
    rng = np.random.default_rng(11)
    traces = [_trace("S6", rng.uniform(20, 50, 3), rng.uniform(0, 1, 3),
                     [("d1", "warp"), ("d2", "warp"), ("d5", "extrapolate")], i)
              for i in range(6)]
    whole = aggregate_report(traces, policy="p")
    part_a = aggregate_report(traces[:2], policy="p")
    part_b = aggregate_report(traces[2:], policy="p")
    get = lambda rows: [r for r in rows if r["scenario"] == "all"][0]
    merged_psnr = (get(part_a)["mean_psnr"] * 6 + get(part_b)["mean_psnr"] * 12) / 18
    assert get(whole)["mean_psnr"] == pytest.approx(merged_psnr, abs=1e-9)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate_report([])
