"""Multi-frame hole-filling extrapolation and its latency model.

The slow, high-quality frame-generation path. The newest frame is warped
forward; disoccluded pixels are recovered from the two older history frames
warped to the same target slot, and anything still uncovered is closed by
iterative neighborhood diffusion. Latency is simulated bookkeeping: the
model charges the configured per-stage milliseconds, no wall-clock waiting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .warp import splat_forward

RESOLUTION_CLASSES = ("480p", "720p", "1080p")

DIFFUSION_MAX_ROUNDS = 64
DIFFUSION_FALLBACK = 128  # mid-gray for pixels no information ever reaches


@dataclass(frozen=True)
class StageLatency:
    gbuffer_ms: float
    warp_ms: float
    hole_mark_ms: float
    inference_ms: float


@dataclass(frozen=True)
class LatencyModel:
    """Per-resolution-class stage latencies in milliseconds."""

    classes: Mapping[str, StageLatency]

    def __post_init__(self):
        bad = []
        for name, st in self.classes.items():
            for fieldname in ("gbuffer_ms", "warp_ms", "hole_mark_ms", "inference_ms"):
                v = getattr(st, fieldname)
                if not v > 0:
                    bad.append(f"latency.{name}.{fieldname}={v} must be > 0")
        if bad:
            raise ValidationError(bad)


def default_latency_model() -> LatencyModel:
    """Measured per-stage costs of a DNN extrapolation pipeline at each class."""
    return LatencyModel(classes={
        "480p": StageLatency(gbuffer_ms=0.17, warp_ms=0.95, hole_mark_ms=1.94, inference_ms=3.67),
        "720p": StageLatency(gbuffer_ms=1.24, warp_ms=1.67, hole_mark_ms=2.59, inference_ms=7.09),
        "1080p": StageLatency(gbuffer_ms=2.1, warp_ms=2.91, hole_mark_ms=4.63, inference_ms=13.78),
    })


def resolution_class_for(height: int) -> str:
    if height <= 480:
        return "480p"
    if height <= 720:
        return "720p"
    return "1080p"


def total_latency(model: LatencyModel, resolution_class: str) -> float:
    """Latency charged to one extrapolation request, in ms.

    G-buffer generation is the renderer's cost, not the request's, so the sum
    covers warping, hole marking, and inference only.
    """
    if resolution_class not in model.classes:
        raise ValidationError(
            f"unknown resolution class {resolution_class!r}; "
            f"model defines {sorted(model.classes)}")
    st = model.classes[resolution_class]
    return st.warp_ms + st.hole_mark_ms + st.inference_ms


@dataclass(frozen=True)
class ExtrapolatedFrame:
    pixels: np.ndarray     # (H, W, 3) uint8, fully defined
    available_at: int      # quarter-slot index the result can first be displayed
    source_timestamp: int  # newest history frame's timestamp


def _diffuse_remaining(out: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Fill still-undefined pixels with the mean of defined 8-neighbors,
    round by round, until nothing is left or the round cap is hit."""
    pix = out.astype(np.float64)
    defined = defined.copy()
    for _ in range(DIFFUSION_MAX_ROUNDS):
        if defined.all():
            break
        padded_def = np.pad(defined, 1)
        padded_val = np.pad(pix * defined[..., None], ((1, 1), (1, 1), (0, 0)))
        counts = np.zeros(defined.shape, dtype=np.int64)
        sums = np.zeros(pix.shape, dtype=np.float64)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                counts += padded_def[1 + dy:1 + dy + defined.shape[0],
                                     1 + dx:1 + dx + defined.shape[1]]
                sums += padded_val[1 + dy:1 + dy + defined.shape[0],
                                   1 + dx:1 + dx + defined.shape[1]]
        newly = ~defined & (counts > 0)
        if not newly.any():
            break
        pix[newly] = sums[newly] / counts[newly][:, None]
        defined |= newly
    if not defined.all():
        pix[~defined] = DIFFUSION_FALLBACK
    return np.clip(np.rint(pix), 0, 255).astype(np.uint8)


def extrapolate_frame(history, steps: int, *, issue_slot: int = 0,
                      latency: LatencyModel | None = None,
                      resolution_class: str = "480p",
                      base_fps: int = 30,
                      older_steps: tuple[float, float] | None = None) -> ExtrapolatedFrame:
    """Extrapolate a frame `steps` quarter-slots past the newest history frame.

    `history` is three (frame, gbuffers) pairs, oldest first. The newest frame
    is warped forward by `steps`; its holes are filled from the middle and
    oldest frames warped to the same target slot (by default steps+4 and
    steps+8, i.e. history spaced one base frame apart — pass `older_steps`
    to override when the spacing differs). Residual holes are diffused away,
    so the output never contains undefined pixels.
    """
    if len(history) != 3:
        raise ValidationError(f"extrapolation needs exactly 3 history frames, got {len(history)}")
    if steps not in (1, 2, 3):
        raise ValueError(f"steps={steps} must be in 1..3")
    if older_steps is None:
        older_steps = (steps + 4, steps + 8)

    (oldest, gb_old), (middle, gb_mid), (newest, gb_new) = history
    px_new = newest.pixels if hasattr(newest, "pixels") else np.asarray(newest)

    out, defined = splat_forward(px_new, gb_new.motion_dense, steps, gb_new.depth)
    for frm, gb, s in ((middle, gb_mid, older_steps[0]), (oldest, gb_old, older_steps[1])):
        if defined.all():
            break
        px = frm.pixels if hasattr(frm, "pixels") else np.asarray(frm)
        cand, covered = splat_forward(px, gb.motion_dense, s, gb.depth)
        take = ~defined & covered
        out[take] = cand[take]
        defined |= take

    if not defined.all():
        out = _diffuse_remaining(out, defined)

    model = latency if latency is not None else default_latency_model()
    quarter_slot_ms = 1000.0 / (4.0 * base_fps)
    delay = math.ceil(total_latency(model, resolution_class) / quarter_slot_ms)
    return ExtrapolatedFrame(
        pixels=out,
        available_at=issue_slot + max(delay, 1),
        source_timestamp=getattr(newest, "timestamp", 0),
    )
