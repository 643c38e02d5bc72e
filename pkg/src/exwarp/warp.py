"""Forward-splat image warping and hole accounting.

The fast frame-generation path: every source pixel is splatted along its
motion vector; target pixels nothing lands on are holes. Holes are filled
for display from the nearest covered pixel, but the pre-fill mask is kept
so callers can measure (or re-fill) them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

VALID_STEPS = (1, 2, 3)


@dataclass(frozen=True)
class WarpedFrame:
    pixels: np.ndarray          # (H, W, 3) uint8, holes already filled for display
    hole_mask: np.ndarray       # (H, W) bool, True where no splat landed
    hole_fraction: float        # exact count(hole_mask) / (H*W)
    source_timestamp: int


def splat_forward(pixels: np.ndarray, motion: np.ndarray, steps: float,
                  depth: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Forward-splat pixels by `steps` quarter-slots; no hole filling.

    Each source pixel p lands at round(p + steps * motion[p]); when two
    sources hit the same target the one with the smaller depth wins (ties go
    to the smaller row-major source index). Returns (splatted, covered);
    uncovered targets are zero in the output.
    """
    h, w = pixels.shape[:2]
    if motion.shape[:2] != (h, w):
        raise DimensionMismatchError(f"motion {motion.shape[:2]} vs frame {(h, w)}")
    if depth is not None and depth.shape != (h, w):
        raise DimensionMismatchError(f"depth {depth.shape} vs frame {(h, w)}")

    sy, sx = np.mgrid[0:h, 0:w]
    tx = np.rint(sx + steps * motion[..., 0].astype(np.float64)).astype(np.int64).ravel()
    ty = np.rint(sy + steps * motion[..., 1].astype(np.float64)).astype(np.int64).ravel()
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)

    src_idx = np.nonzero(inside)[0]
    lin = ty[inside] * w + tx[inside]
    if depth is None:
        dvals = np.zeros(src_idx.size)
    else:
        dvals = depth.ravel()[src_idx].astype(np.float64)
    # Nearest depth wins; stable tie-break on source index.
    order = np.lexsort((src_idx, dvals))
    lin_sorted = lin[order]
    uniq, first = np.unique(lin_sorted, return_index=True)
    winners = src_idx[order[first]]

    out = np.zeros_like(pixels)
    out.reshape(-1, pixels.shape[2])[uniq] = pixels.reshape(-1, pixels.shape[2])[winners]
    covered = np.zeros(h * w, dtype=bool)
    covered[uniq] = True
    return out, covered.reshape(h, w)


def warp_frame(source, motion: np.ndarray, steps: int,
               depth: np.ndarray | None = None) -> WarpedFrame:
    """Warp a frame forward by `steps` quarter-slots.

    Wraps splat_forward: uncovered targets are recorded as holes and then
    filled from their nearest covered neighbor by 4-way breadth-first
    propagation so the frame is always displayable.
    """
    pixels = source.pixels if hasattr(source, "pixels") else np.asarray(source)
    timestamp = getattr(source, "timestamp", 0)
    if steps not in VALID_STEPS:
        raise ValueError(f"steps={steps} must be one of {VALID_STEPS}")
    out, covered = splat_forward(pixels, motion, steps, depth)
    hole_mask = ~covered
    hole_count = int(hole_mask.sum())
    if hole_count:
        out = fill_from_nearest(out, covered)
    h, w = pixels.shape[:2]
    return WarpedFrame(pixels=out, hole_mask=hole_mask,
                       hole_fraction=hole_count / float(h * w),
                       source_timestamp=timestamp)


def fill_from_nearest(pixels: np.ndarray, covered: np.ndarray) -> np.ndarray:
    """Fill uncovered pixels layer by layer from 4-connected covered neighbors.

    Equivalent to a multi-source BFS: each round fills every uncovered pixel
    adjacent to the covered region, taking neighbors in the fixed order
    up, down, left, right.
    """
    out = pixels.copy()
    covered = covered.copy()
    while not covered.all():
        prev_covered = covered.copy()
        filled_this_round = np.zeros_like(covered)
        for shift in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            neighbor_cov = np.zeros_like(prev_covered)
            neighbor_val = np.zeros_like(out)
            if shift == (1, 0):      # take from the pixel above
                neighbor_cov[1:, :] = prev_covered[:-1, :]
                neighbor_val[1:, :] = out[:-1, :]
            elif shift == (-1, 0):   # below
                neighbor_cov[:-1, :] = prev_covered[1:, :]
                neighbor_val[:-1, :] = out[1:, :]
            elif shift == (0, 1):    # left
                neighbor_cov[:, 1:] = prev_covered[:, :-1]
                neighbor_val[:, 1:] = out[:, :-1]
            else:                    # right
                neighbor_cov[:, :-1] = prev_covered[:, 1:]
                neighbor_val[:, :-1] = out[:, 1:]
            take = ~covered & ~filled_this_round & neighbor_cov
            out[take] = neighbor_val[take]
            filled_this_round |= take
        if not filled_this_round.any():
            break  # unreachable pixels (fully uncovered frame); leave as zeros
        covered |= filled_this_round
    return out


def hole_histogram(warped, buckets) -> np.ndarray:
    """Count frames per hole-fraction bucket.

    `buckets` is a strictly increasing list of thresholds in [0, 1]; the
    returned histogram has len(buckets)+1 half-open bins
    [0, b0), [b0, b1), ..., [b_last, 1].
    """
    thresholds = list(buckets)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("bucket thresholds must strictly increase")
    if thresholds and (thresholds[0] < 0.0 or thresholds[-1] > 1.0):
        raise ValueError("bucket thresholds must lie in [0, 1]")
    counts = np.zeros(len(thresholds) + 1, dtype=np.int64)
    for frame in warped:
        frac = frame.hole_fraction if hasattr(frame, "hole_fraction") else float(frame)
        counts[np.searchsorted(thresholds, frac, side="right")] += 1
    return counts
