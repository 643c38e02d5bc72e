"""Image quality measurement: PSNR, single-scale SSIM, and report aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatchError

PSNR_CEILING_DB = 100.0

# SSIM constants (single scale, 8-bit dynamic range).
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_L = 255.0


@dataclass(frozen=True)
class QualityPair:
    """PSNR (dB, clamped to (0, 100]) and SSIM (in [-1, 1]) for one frame pair."""

    psnr: float
    ssim: float


def _as_pixels(frame) -> np.ndarray:
    return frame.pixels if hasattr(frame, "pixels") else np.asarray(frame)


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"frame shapes differ: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio over all channels jointly, in dB.

    MSE is accumulated in double precision; an exact match (MSE=0) is
    clamped to 100 dB so downstream reward arithmetic stays finite.
    """
    pa = _as_pixels(a)
    pb = _as_pixels(b)
    _check_dims(pa, pb)
    diff = pa.astype(np.float64) - pb.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CEILING_DB
    value = 10.0 * np.log10(255.0 ** 2 / mse)
    return float(min(max(value, 0.0), PSNR_CEILING_DB))


def _gaussian_kernel(radius: int, sigma: float) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_mean(img: np.ndarray, kernel: np.ndarray, radius: int) -> np.ndarray:
    # Separable Gaussian; borders are filtered with 'reflect' padding and then
    # cropped, so every retained position is an exact valid-window result.
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    out = correlate1d(out, kernel, axis=1, mode="reflect")
    return out[radius:-radius, radius:-radius]


def ssim(a, b) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    RGB input is reduced to the plain per-pixel channel mean (no luma
    weighting) and the SSIM map is averaged over valid window positions only.
    """
    pa = _as_pixels(a)
    pb = _as_pixels(b)
    _check_dims(pa, pb)
    if min(pa.shape[0], pa.shape[1]) < _SSIM_WINDOW:
        raise DimensionMismatchError(
            f"frame {pa.shape[1]}x{pa.shape[0]} smaller than the {_SSIM_WINDOW}px SSIM window"
        )
    x = pa.astype(np.float64)
    y = pb.astype(np.float64)
    if x.ndim == 3:
        x = x.mean(axis=2)
        y = y.mean(axis=2)

    radius = _SSIM_WINDOW // 2
    kernel = _gaussian_kernel(radius, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * _SSIM_L) ** 2
    c2 = (_SSIM_K2 * _SSIM_L) ** 2

    mu_x = _window_mean(x, kernel, radius)
    mu_y = _window_mean(y, kernel, radius)
    var_x = _window_mean(x * x, kernel, radius) - mu_x * mu_x
    var_y = _window_mean(y * y, kernel, radius) - mu_y * mu_y
    cov = _window_mean(x * y, kernel, radius) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def quality_pair(a, b) -> QualityPair:
    return QualityPair(psnr=psnr(a, b), ssim=ssim(a, b))


def aggregate_report(traces, policy: str = "policy", base_fps: float | None = None):
    """Summarize a list of decision traces into per-scenario and overall rows.

    Returns a list of row dicts with keys (policy, scenario, count, mean_psnr,
    mean_ssim, warp_ratio, effective_fps); the scenario="all" row carries the
    overall means. Quality means run over every intermediate display slot.
    """
    if not traces:
        raise ValueError("aggregate_report requires at least one trace")
    by_scenario: dict[str, list] = {}
    for tr in traces:
        by_scenario.setdefault(tr.scenario, []).append(tr)

    def _row(scenario, group):
        psnrs = [q.psnr for tr in group for q in tr.slot_quality]
        ssims = [q.ssim for tr in group for q in tr.slot_quality]
        warp_n = sum(1 for tr in group for _, act in tr.decisions if act == "warp")
        total_n = sum(len(tr.decisions) for tr in group)
        inserted = sum(tr.inserted_frames for tr in group)
        eff = None
        if base_fps is not None:
            eff = base_fps * (1.0 + inserted / len(group))
        return {
            "policy": policy,
            "scenario": scenario,
            "count": len(group),
            "mean_psnr": float(np.mean(psnrs)),
            "mean_ssim": float(np.mean(ssims)),
            "warp_ratio": warp_n / total_n if total_n else 0.0,
            "effective_fps": eff,
        }

    rows = [_row(s, g) for s, g in sorted(by_scenario.items())]
    rows.append(_row("all", traces))
    return rows
