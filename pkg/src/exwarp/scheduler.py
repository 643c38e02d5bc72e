"""Inter-frame interval execution: the five-node decision walk.

For each rendered base frame F_t, three display slots (t+0.25, t+0.5,
t+0.75) are filled by walking the decision tree:

    d1 (at t):      warp F_t for P1, or repeat F_t and commit E(F_t) to P2
    d2 (at t+0.25): after d1=warp, P2 is warp(P1) or the speculative E(F_t)
    d3 (at t+0.5):  after d1=extrapolate, P3 is warp(P2) or nothing new
    d4/d5 (t+0.5):  after d1=warp (split by d2), P3 is warp(P2) or E(P1)

Extrapolation latency is simulated bookkeeping: a request whose modeled
latency exceeds the two-quarter-slot budget is downgraded to a frame repeat
and recorded as such. E(F_t) is speculatively issued at t whenever d1 warps,
and counted as discarded work if d2 never displays it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import metrics
from .dataset import Episode
from .errors import IllegalActionError, ValidationError
from .extrapolate import (LatencyModel, default_latency_model, extrapolate_frame,
                          resolution_class_for, total_latency)
from .features import (EnvVector, NormScales, StateVector, TemporalVector,
                       assemble_state, env_vector)
from .predictor import ACTION_EXTRAPOLATE, ACTION_WARP, Experience, compute_reward
from .scenegen import Frame, GBufferSet
from .warp import warp_frame

PROV_REPEAT = "rendered-repeat"
PROV_WARPED = "warped"
PROV_EXTRAPOLATED = "extrapolated"

SCENARIOS = ("S1", "S2", "S3", "S4", "S5", "S6")

ACTION_LABELS = {ACTION_WARP: "warp", ACTION_EXTRAPOLATE: "extrapolate"}


@dataclass(frozen=True)
class DecisionNode:
    id: str
    slot: int  # quarter-slot offset at which the decision is taken
    legal: Callable[[Mapping[str, str]], bool]


NODES = {
    "d1": DecisionNode("d1", 0, lambda prior: not prior),
    "d2": DecisionNode("d2", 1, lambda prior: prior.get("d1") == "warp"),
    "d3": DecisionNode("d3", 2, lambda prior: prior.get("d1") == "extrapolate"),
    "d4": DecisionNode("d4", 2, lambda prior: prior.get("d1") == "warp"
                       and prior.get("d2") == "extrapolate"),
    "d5": DecisionNode("d5", 2, lambda prior: prior.get("d1") == "warp"
                       and prior.get("d2") == "warp"),
}


def classify_scenario(decisions) -> str:
    """Map a legal decision path onto its scenario S1..S6."""
    if not isinstance(decisions, dict):
        decisions = dict(decisions)
    keys = frozenset(decisions)
    d1 = decisions.get("d1")
    if d1 == "extrapolate" and keys == {"d1", "d3"}:
        if decisions["d3"] == "no_new_frame":
            return "S1"
        if decisions["d3"] == "warp":
            return "S2"
    elif d1 == "warp" and keys == {"d1", "d2", "d4"} and decisions["d2"] == "extrapolate":
        if decisions["d4"] == "extrapolate":
            return "S3"
        if decisions["d4"] == "warp":
            return "S4"
    elif d1 == "warp" and keys == {"d1", "d2", "d5"} and decisions["d2"] == "warp":
        if decisions["d5"] == "extrapolate":
            return "S5"
        if decisions["d5"] == "warp":
            return "S6"
    raise IllegalActionError(f"not a legal decision path: {sorted(decisions.items())}")


@dataclass
class SlotDisplay:
    """What one intermediate display slot actually showed."""

    provenance: str          # rendered-repeat | warped | extrapolated
    is_repeat: bool          # same content as the previously displayed slot
    downgraded: bool = False  # an extrapolation that missed its latency budget
    psnr: float | None = None
    ssim: float | None = None
    pixels: np.ndarray | None = None  # dropped from serialized traces


@dataclass
class NodeRecord:
    """Per-decision bookkeeping used for training-data collection."""

    node_id: str
    action: int              # raw policy action (0 warp / 1 extrapolate)
    label: str               # semantic label, incl. no_new_frame at d3
    state: StateVector | None
    reward: float | None


@dataclass
class DecisionTrace:
    interval_index: int
    decisions: list[tuple[str, str]]
    displayed: list[SlotDisplay]               # offsets +1, +2, +3
    dropped_slots: int
    scenario: str
    speculative_discarded: int = 0
    annotated: bool = True
    node_records: list[NodeRecord] = field(default_factory=list)

    @property
    def slot_quality(self):
        return [metrics.QualityPair(s.psnr, s.ssim) for s in self.displayed
                if s.psnr is not None]

    @property
    def inserted_frames(self) -> int:
        return sum(1 for s in self.displayed if not s.is_repeat)

    def to_json_dict(self) -> dict:
        return {
            "interval": self.interval_index,
            "scenario": self.scenario,
            "decisions": [list(d) for d in self.decisions],
            "displayed": [{
                "offset": i + 1,
                "provenance": s.provenance,
                "is_repeat": s.is_repeat,
                "downgraded": s.downgraded,
                "psnr": s.psnr,
                "ssim": s.ssim,
            } for i, s in enumerate(self.displayed)],
            "dropped_slots": self.dropped_slots,
            "speculative_discarded": self.speculative_discarded,
            "annotated": self.annotated,
        }


@dataclass
class FpsReport:
    base_fps: int
    interval_count: int
    inserted_frames: int
    effective_fps: float
    scenario_counts: dict[str, int]
    downgrade_count: int = 0
    speculative_discarded: int = 0

    def to_json_dict(self) -> dict:
        return {
            "base_fps": self.base_fps,
            "interval_count": self.interval_count,
            "inserted_frames": self.inserted_frames,
            "effective_fps": self.effective_fps,
            "scenario_counts": dict(sorted(self.scenario_counts.items())),
            "downgrade_count": self.downgrade_count,
            "speculative_discarded": self.speculative_discarded,
        }


class DecisionContext:
    """What a policy may look at when deciding one node."""

    def __init__(self, node_id, state_fn, candidates, gt_pixels):
        self.node_id = node_id
        self._state_fn = state_fn
        self._candidates = candidates
        self._cache = {}
        self.gt_pixels = gt_pixels
        self._state = None

    @property
    def state(self) -> StateVector | None:
        if self._state is None and self._state_fn is not None:
            self._state = self._state_fn(self.node_id)
        return self._state

    def candidate(self, action: int) -> np.ndarray:
        if action not in self._cache:
            self._cache[action] = self._candidates[action]()
        return self._cache[action]


@dataclass
class IntervalInputs:
    """Everything run_interval needs about F_t and its surroundings."""

    index: int                                   # base-frame index t
    frame: Frame
    gbuf: GBufferSet
    prev: list[tuple[Frame, GBufferSet]]         # [(F_{t-2}, gb), (F_{t-1}, gb)]
    ground_truth: list[Frame] | None = None      # frames at offsets +1, +2, +3
    state_fn: Callable[[str], StateVector] | None = None


def _decide(policy, ctx: DecisionContext) -> int:
    action = policy.decide(ctx)
    if action not in (ACTION_WARP, ACTION_EXTRAPOLATE):
        raise IllegalActionError(
            f"policy returned {action!r} at {ctx.node_id}; legal actions are 0 and 1")
    return int(action)


def run_interval(interval: IntervalInputs, policy,
                 latency: LatencyModel | None = None,
                 base_fps: int = 30, *,
                 resolution_class: str | None = None,
                 reward_cfg: dict | None = None,
                 collect_experiences: bool = False) -> DecisionTrace:
    """Walk one inter-frame interval and return its trace.

    Requires two older (frame, gbuffer) pairs for extrapolation eligibility.
    When `collect_experiences` is set, ground truth must be present and each
    node's reward (chosen vs. the action not taken, at the node's own display
    slot) is recorded in the trace's node_records.
    """
    if len(interval.prev) != 2:
        raise ValidationError(
            f"interval needs 2 older frames for extrapolation, got {len(interval.prev)}")
    if collect_experiences and interval.ground_truth is None:
        raise ValidationError("experience collection requires ground truth")

    model = latency if latency is not None else default_latency_model()
    frame, gbuf = interval.frame, interval.gbuf
    res_class = resolution_class or resolution_class_for(frame.pixels.shape[0])
    quarter_ms = 1000.0 / (4.0 * base_fps)
    budget_ms = 2.0 * quarter_ms
    lat_ms = total_latency(model, res_class)
    feasible = lat_ms <= budget_ms
    qbase = frame.timestamp
    motion = gbuf.motion_dense
    depth = gbuf.depth
    rcfg = reward_cfg or {}

    memo: dict[str, np.ndarray] = {}

    def full_extrapolation() -> np.ndarray:
        # E(F_t): speculatively issued at t, lands at offset +2.
        if "e_full" not in memo:
            history = [interval.prev[0], interval.prev[1], (frame, gbuf)]
            memo["e_full"] = extrapolate_frame(
                history, 2, issue_slot=qbase, latency=model,
                resolution_class=res_class, base_fps=base_fps).pixels
        return memo["e_full"]

    def warped(key: str, pixels: np.ndarray, steps: int = 1) -> np.ndarray:
        if key not in memo:
            memo[key] = warp_frame(pixels, motion, steps, depth).pixels
        return memo[key]

    gt = interval.ground_truth
    decisions: list[tuple[str, str]] = []
    records: list[NodeRecord] = []
    displayed: list[SlotDisplay] = []
    prior: dict[str, str] = {}
    discarded = 0

    def run_node(node_id: str, candidates: dict, slot_offset: int,
                 downgrade_on: int | None = None):
        """Decide one node; returns (action, SlotDisplay)."""
        gt_pixels = gt[slot_offset - 1].pixels if gt is not None else None
        ctx = DecisionContext(node_id, interval.state_fn,
                              {a: c[0] for a, c in candidates.items()}, gt_pixels)
        action = _decide(policy, ctx)
        label = ACTION_LABELS[action]
        if node_id == "d3" and action == ACTION_EXTRAPOLATE:
            label = "no_new_frame"
        pixels = ctx.candidate(action)
        provenance, is_repeat = candidates[action][1], candidates[action][2]
        downgraded = downgrade_on == action and not feasible

        slot = SlotDisplay(provenance=provenance, is_repeat=is_repeat,
                           downgraded=downgraded, pixels=pixels)
        if gt_pixels is not None:
            slot.psnr = metrics.psnr(pixels, gt_pixels)
            slot.ssim = metrics.ssim(pixels, gt_pixels)
        reward = None
        if collect_experiences:
            alt = ctx.candidate(1 - action)
            reward = compute_reward(pixels, alt, gt_pixels, dropped=is_repeat, **rcfg)
        decisions.append((node_id, label))
        prior[node_id] = label
        state = ctx.state if interval.state_fn is not None else None
        records.append(NodeRecord(node_id=node_id, action=action, label=label,
                                  state=state, reward=reward))
        return action, slot

    # --- d1: decides the frame at offset +1 -------------------------------
    d1_candidates = {
        ACTION_WARP: (lambda: warped("w_f1", frame.pixels), PROV_WARPED, False),
        ACTION_EXTRAPOLATE: (lambda: frame.pixels, PROV_REPEAT, True),
    }
    a1, slot1 = run_node("d1", d1_candidates, 1)
    displayed.append(slot1)

    if a1 == ACTION_EXTRAPOLATE:
        # P2 is the committed E(F_t); an infeasible request repeats instead.
        if feasible:
            p2 = SlotDisplay(PROV_EXTRAPOLATED, False, pixels=full_extrapolation())
        else:
            p2 = SlotDisplay(PROV_REPEAT, True, downgraded=True, pixels=slot1.pixels)
        if gt is not None:
            p2.psnr = metrics.psnr(p2.pixels, gt[1].pixels)
            p2.ssim = metrics.ssim(p2.pixels, gt[1].pixels)
        displayed.append(p2)

        d3_candidates = {
            ACTION_WARP: (lambda: warped("w_p2", p2.pixels), PROV_WARPED, False),
            ACTION_EXTRAPOLATE: (lambda: p2.pixels, p2.provenance, True),
        }
        _, slot3 = run_node("d3", d3_candidates, 3)
        displayed.append(slot3)
    else:
        # d2: warp the last displayed frame again, or use the speculative E(F_t).
        if feasible:
            d2_extra = (full_extrapolation, PROV_EXTRAPOLATED, False)
        else:
            d2_extra = (lambda: slot1.pixels, PROV_REPEAT, True)
        d2_candidates = {
            ACTION_WARP: (lambda: warped("w_p1", slot1.pixels), PROV_WARPED, False),
            ACTION_EXTRAPOLATE: d2_extra,
        }
        a2, slot2 = run_node("d2", d2_candidates, 2,
                             downgrade_on=ACTION_EXTRAPOLATE)
        displayed.append(slot2)
        if a2 == ACTION_WARP:
            discarded += 1  # speculative E(F_t) never displayed

        def extrapolated_p1() -> np.ndarray:
            # E(P1), issued at offset +1 for offset +3. P1 is synthesized, so
            # it borrows F_t's buffers; its history is spaced 1, 1, 4 slots.
            if "e_p1" not in memo:
                p1_frame = Frame(pixels=slot1.pixels, timestamp=qbase + 1)
                history = [interval.prev[1], (frame, gbuf), (p1_frame, gbuf)]
                memo["e_p1"] = extrapolate_frame(
                    history, 2, issue_slot=qbase + 1, latency=model,
                    resolution_class=res_class, base_fps=base_fps,
                    older_steps=(3, 7)).pixels
            return memo["e_p1"]

        node3 = "d4" if a2 == ACTION_EXTRAPOLATE else "d5"
        if feasible:
            d43_extra = (extrapolated_p1, PROV_EXTRAPOLATED, False)
        else:
            d43_extra = (lambda: slot2.pixels, slot2.provenance, True)
        node3_candidates = {
            ACTION_WARP: (lambda: warped("w_p2", slot2.pixels), PROV_WARPED, False),
            ACTION_EXTRAPOLATE: d43_extra,
        }
        _, slot3 = run_node(node3, node3_candidates, 3,
                            downgrade_on=ACTION_EXTRAPOLATE)
        displayed.append(slot3)

    trace = DecisionTrace(
        interval_index=interval.index,
        decisions=decisions,
        displayed=displayed,
        dropped_slots=sum(1 for s in displayed if s.is_repeat),
        scenario=classify_scenario(decisions),
        speculative_discarded=discarded,
        annotated=gt is not None,
        node_records=records,
    )
    return trace


def episode_env_vectors(episode: Episode) -> list[EnvVector]:
    """Per-base-frame environment features (EMD terms are 0 at frame 0)."""
    envs = []
    for t, gb in enumerate(episode.gbuffers):
        prev = episode.gbuffers[t - 1] if t > 0 else None
        envs.append(env_vector(gb, prev, episode.width, episode.height))
    return envs


class EpisodeStateTracker:
    """Assembles per-node state vectors while an episode advances.

    History entries carry each past frame's environment features plus the
    one-hot of the last decision node taken in that frame's interval (all
    zeros for frames that were never scheduled or that precede the episode).
    """

    def __init__(self, episode: Episode, scales: NormScales | None = None):
        self.envs = episode_env_vectors(episode)
        self.scales = scales or NormScales.for_resolution(episode.width, episode.height)
        self.last_node: dict[int, TemporalVector] = {}

    def state_fn(self, t: int) -> Callable[[str], StateVector]:
        def build(node_id: str) -> StateVector:
            entries = [(self.envs[t], TemporalVector.for_node(node_id))]
            for k in (1, 2, 3):
                idx = t - k
                if idx < 0:
                    entries.append(None)
                else:
                    entries.append((self.envs[idx], self.last_node.get(idx)))
            return assemble_state(entries, self.scales)
        return build

    def mark_done(self, t: int, last_node_id: str) -> None:
        self.last_node[t] = TemporalVector.for_node(last_node_id)


def iter_intervals(episode: Episode, *, with_ground_truth: bool = True,
                   tracker: EpisodeStateTracker | None = None):
    """Yield IntervalInputs for base frames 2 .. episode_len-2.

    The first two base frames only prime the extrapolation history; the last
    base frame has no interval after it.
    """
    for t in range(2, episode.episode_len - 1):
        q = 4 * t
        gt = None
        if with_ground_truth:
            gt = [episode.frames[q + i] for i in (1, 2, 3)]
        yield IntervalInputs(
            index=t,
            frame=episode.frames[q],
            gbuf=episode.gbuffers[t],
            prev=[(episode.frames[q - 8], episode.gbuffers[t - 2]),
                  (episode.frames[q - 4], episode.gbuffers[t - 1])],
            ground_truth=gt,
            state_fn=tracker.state_fn(t) if tracker is not None else None,
        )


def run_episode(episode: Episode, policy,
                latency: LatencyModel | None = None,
                base_fps: int | None = None, *,
                collect_experiences: bool = False,
                experience_sink=None,
                reward_cfg: dict | None = None,
                keep_pixels: bool = False):
    """Run every interval of an episode under one policy.

    Returns (traces, FpsReport, quality summary dict). When collecting
    experiences, consecutive decision nodes are chained into (state, action,
    reward, next_state) tuples, crossing interval boundaries, with the final
    node of the episode marked terminal; completed experiences are passed to
    `experience_sink`.
    """
    if episode.episode_len < 4:
        raise ValidationError(
            f"episode has {episode.episode_len} base frames; at least 4 required")
    fps = base_fps if base_fps is not None else episode.base_fps
    tracker = EpisodeStateTracker(episode)
    traces: list[DecisionTrace] = []
    pending: NodeRecord | None = None

    for interval in iter_intervals(episode, tracker=tracker):
        trace = run_interval(interval, policy, latency, fps,
                             collect_experiences=collect_experiences,
                             reward_cfg=reward_cfg)
        tracker.mark_done(interval.index, trace.decisions[-1][0])
        if collect_experiences and experience_sink is not None:
            for rec in trace.node_records:
                if pending is not None:
                    experience_sink(Experience(
                        state=pending.state, action=pending.action,
                        reward=pending.reward, next_state=rec.state,
                        terminal=False))
                pending = rec
        if not keep_pixels:
            for slot in trace.displayed:
                slot.pixels = None
        traces.append(trace)

    if collect_experiences and experience_sink is not None and pending is not None:
        zero_state = StateVector.encode(np.zeros(44))
        experience_sink(Experience(state=pending.state, action=pending.action,
                                   reward=pending.reward, next_state=zero_state,
                                   terminal=True))

    scenario_counts: dict[str, int] = {}
    for tr in traces:
        scenario_counts[tr.scenario] = scenario_counts.get(tr.scenario, 0) + 1
    inserted = sum(tr.inserted_frames for tr in traces)
    report = FpsReport(
        base_fps=fps,
        interval_count=len(traces),
        inserted_frames=inserted,
        effective_fps=fps * (1.0 + inserted / len(traces)),
        scenario_counts=scenario_counts,
        downgrade_count=sum(1 for tr in traces for s in tr.displayed if s.downgraded),
        speculative_discarded=sum(tr.speculative_discarded for tr in traces),
    )
    quality = {}
    pairs = [q for tr in traces for q in tr.slot_quality]
    if pairs:
        quality = {
            "mean_psnr": float(np.mean([q.psnr for q in pairs])),
            "mean_ssim": float(np.mean([q.ssim for q in pairs])),
        }
    return traces, report, quality
