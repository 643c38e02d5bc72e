"""Decision policies: the six fixed paths, a ground-truth oracle, the trained
network, and the epsilon-greedy behavior wrapper used while training."""

from __future__ import annotations

import numpy as np

from . import metrics
from .errors import ValidationError
from .predictor import (ACTION_EXTRAPOLATE, ACTION_WARP, QNetwork, forward,
                        load_checkpoint, select_action)

# Which action each fixed scenario takes at each node it visits.
_FIXED_PATHS = {
    "S1": {"d1": ACTION_EXTRAPOLATE, "d3": ACTION_EXTRAPOLATE},
    "S2": {"d1": ACTION_EXTRAPOLATE, "d3": ACTION_WARP},
    "S3": {"d1": ACTION_WARP, "d2": ACTION_EXTRAPOLATE, "d4": ACTION_EXTRAPOLATE},
    "S4": {"d1": ACTION_WARP, "d2": ACTION_EXTRAPOLATE, "d4": ACTION_WARP},
    "S5": {"d1": ACTION_WARP, "d2": ACTION_WARP, "d5": ACTION_EXTRAPOLATE},
    "S6": {"d1": ACTION_WARP, "d2": ACTION_WARP, "d5": ACTION_WARP},
}


class FixedPolicy:
    """Always follows one of the six legal decision paths."""

    def __init__(self, scenario: str):
        if scenario not in _FIXED_PATHS:
            raise ValidationError(f"unknown fixed policy {scenario!r}; expected S1..S6")
        self.name = scenario
        self._path = _FIXED_PATHS[scenario]

    def decide(self, ctx) -> int:
        return self._path[ctx.node_id]


class OraclePolicy:
    """Upper-bound baseline: picks whichever candidate frame scores the higher
    PSNR against ground truth at the node's display slot; ties warp."""

    name = "oracle"

    def decide(self, ctx) -> int:
        if ctx.gt_pixels is None:
            raise ValidationError("oracle policy needs ground truth")
        p_warp = metrics.psnr(ctx.candidate(ACTION_WARP), ctx.gt_pixels)
        p_extra = metrics.psnr(ctx.candidate(ACTION_EXTRAPOLATE), ctx.gt_pixels)
        return ACTION_WARP if p_warp >= p_extra else ACTION_EXTRAPOLATE


class TrainedPolicy:
    """Greedy evaluation of the Q-network with a decision threshold.

    Extrapolation, the expensive path, is taken only when its predicted
    reward exceeds warping's by more than `deadband`. Under function
    approximation the two heads are never exactly equal, so bare argmax would
    resolve genuine ties (static content, where both actions are exact) by
    fit noise; the threshold makes near-ties fall to the cheap path. The
    default is 1.5x the frame-drop penalty, calibrated so that it absorbs
    observed tie noise while staying well under real extrapolation margins.
    """

    DEADBAND = 0.15

    def __init__(self, net: QNetwork, name: str = "trained",
                 deadband: float | None = None):
        self.net = net
        self.name = name
        self.deadband = self.DEADBAND if deadband is None else deadband

    def decide(self, ctx) -> int:
        q = forward(self.net, ctx.state)
        if q[ACTION_EXTRAPOLATE] - q[ACTION_WARP] > self.deadband:
            return ACTION_EXTRAPOLATE
        return ACTION_WARP


class EpsilonGreedyPolicy:
    """Training-time behavior policy around a live network."""

    name = "epsilon-greedy"

    def __init__(self, net: QNetwork, rng: np.random.Generator):
        self.net = net
        self.rng = rng
        self.epsilon = 1.0

    def decide(self, ctx) -> int:
        return select_action(self.net, ctx.state, self.epsilon, self.rng)


def make_policy(name: str, deadband: float | None = None):
    """Policy factory for config strings: S1..S6, oracle, trained:<checkpoint>."""
    if name in _FIXED_PATHS:
        return FixedPolicy(name)
    if name == "oracle":
        return OraclePolicy()
    if name.startswith("trained:"):
        path = name.split(":", 1)[1]
        return TrainedPolicy(load_checkpoint(path), deadband=deadband)
    raise ValidationError(
        f"unknown policy {name!r}; expected S1..S6, oracle, or trained:<checkpoint>")
