"""Policy training over rendered episodes, plus leave-one-out validation
across scene families."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dataset import Episode
from .errors import ValidationError
from .extrapolate import LatencyModel
from .policies import EpsilonGreedyPolicy, TrainedPolicy
from .predictor import (ACTION_WARP, MomentumState, QNetwork, ReplayBuffer,
                        TrainConfig, epsilon_at, train_step)
from .scheduler import run_episode


@dataclass
class TrainResult:
    net: QNetwork
    log_rows: list[tuple]   # (step, loss, epsilon, mean_q_warp, mean_q_extrapolate)
    experiences_seen: int


def train_policy(train_episodes: list[Episode], config: TrainConfig,
                 latency: LatencyModel | None = None,
                 reward_cfg: dict | None = None) -> TrainResult:
    """Online Q-learning over the training episodes.

    Episodes are replayed in order (cycling as needed) under an
    epsilon-greedy behavior policy around the live network; every decision
    node contributes one experience and triggers updates_per_point momentum
    SGD steps (with a linear learning-rate decay) once the replay buffer
    holds a full batch. Stops after config.train_points experiences.
    Deterministic for a fixed (episodes, config) pair.
    """
    if not train_episodes:
        raise ValidationError("training requires at least one episode")
    rng = np.random.default_rng(config.rng_seed)
    net = QNetwork.initialize(rng)
    target = net.copy()
    replay = ReplayBuffer(config.replay_capacity)
    behavior = EpsilonGreedyPolicy(net, rng)
    opt_state = MomentumState(net)
    log_rows: list[tuple] = []
    state = {"step": 0, "updates": 0}

    def sink(exp):
        step = state["step"]
        if step >= config.train_points:
            return
        replay.push(exp)
        if len(replay) >= config.batch_size:
            decay = 1.0 - (1.0 - config.lr_final_frac) * step / config.train_points
            lr = config.learning_rate * decay
            for _ in range(config.updates_per_point):
                result = train_step(net, target, replay, config, rng,
                                    state["updates"], opt_state, lr)
                state["updates"] += 1
            log_rows.append((step, result.loss, behavior.epsilon,
                             result.mean_q_warp, result.mean_q_extrapolate))
        state["step"] = step + 1
        behavior.epsilon = epsilon_at(state["step"], config.train_points, config)

    behavior.epsilon = epsilon_at(0, config.train_points, config)
    while state["step"] < config.train_points:
        for episode in train_episodes:
            run_episode(episode, behavior, latency,
                        collect_experiences=True, experience_sink=sink,
                        reward_cfg=reward_cfg)
            if state["step"] >= config.train_points:
                break
    return TrainResult(net=net, log_rows=log_rows, experiences_seen=state["step"])


@dataclass
class PolicyEvaluation:
    policy: str
    mean_psnr: float
    mean_ssim: float
    warp_decisions: int
    extrapolate_decisions: int
    decision_count: int
    mean_effective_fps: float
    scenario_counts: dict[str, int]

    @property
    def warp_ratio(self) -> float:
        return self.warp_decisions / self.decision_count if self.decision_count else 0.0


def evaluate_policy(episodes: list[Episode], policy,
                    latency: LatencyModel | None = None,
                    max_decisions: int | None = None) -> PolicyEvaluation:
    """Run a policy over evaluation episodes and pool the per-slot quality.

    Warp/extrapolate counts are raw policy outputs (a no-new-frame at d3 is
    the extrapolate action). Stops early once max_decisions is reached.
    """
    psnrs: list[float] = []
    ssims: list[float] = []
    warp_n = 0
    extra_n = 0
    decisions = 0
    fps_values = []
    scenario_counts: dict[str, int] = {}
    for episode in episodes:
        traces, report, _ = run_episode(episode, policy, latency)
        fps_values.append(report.effective_fps)
        for s, c in report.scenario_counts.items():
            scenario_counts[s] = scenario_counts.get(s, 0) + c
        for tr in traces:
            psnrs.extend(q.psnr for q in tr.slot_quality)
            ssims.extend(q.ssim for q in tr.slot_quality)
            for rec in tr.node_records:
                if rec.action == ACTION_WARP:
                    warp_n += 1
                else:
                    extra_n += 1
                decisions += 1
        if max_decisions is not None and decisions >= max_decisions:
            break
    return PolicyEvaluation(
        policy=getattr(policy, "name", "policy"),
        mean_psnr=float(np.mean(psnrs)),
        mean_ssim=float(np.mean(ssims)),
        warp_decisions=warp_n,
        extrapolate_decisions=extra_n,
        decision_count=decisions,
        mean_effective_fps=float(np.mean(fps_values)),
        scenario_counts=scenario_counts,
    )


@dataclass
class SceneFamily:
    name: str
    episodes: list[Episode]

    def decision_capacity(self) -> int:
        # Every interval takes at least two decisions (d1 plus one slot-2 node).
        return sum(2 * (ep.episode_len - 3) for ep in self.episodes)


@dataclass
class FoldResult:
    held_out: str
    evaluation: PolicyEvaluation


def cross_validate(scene_families: list[SceneFamily], config: TrainConfig,
                   latency: LatencyModel | None = None,
                   reward_cfg: dict | None = None):
    """Leave-one-family-out: train on the rest, test on the held-out family.

    Returns (fold results, cross-family mean dict). Fold seeds derive
    deterministically from the config seed and fold index.
    """
    if len(scene_families) < 2:
        raise ValidationError("cross-validation needs at least 2 scene families")
    short = [f.name for f in scene_families if f.decision_capacity() < config.test_points]
    if short:
        raise ValidationError(
            [f"family {name!r} cannot supply {config.test_points} test points"
             for name in short])

    folds: list[FoldResult] = []
    for i, held in enumerate(scene_families):
        train_eps = [ep for fam in scene_families if fam is not held
                     for ep in fam.episodes]
        fold_seed = int(np.random.SeedSequence([config.rng_seed, i]).generate_state(1)[0])
        fold_config = dataclasses.replace(config, rng_seed=fold_seed)
        trained = train_policy(train_eps, fold_config, latency, reward_cfg)
        policy = TrainedPolicy(trained.net, name=f"trained/fold-{held.name}")
        evaluation = evaluate_policy(held.episodes, policy, latency,
                                     max_decisions=config.test_points)
        folds.append(FoldResult(held_out=held.name, evaluation=evaluation))

    mean = {
        "mean_psnr": float(np.mean([f.evaluation.mean_psnr for f in folds])),
        "mean_ssim": float(np.mean([f.evaluation.mean_ssim for f in folds])),
        "warp_ratio": float(np.mean([f.evaluation.warp_ratio for f in folds])),
    }
    return folds, mean
