"""Command-line entry point.

Subcommands: generate, run, train, evaluate, compare. Each takes a YAML
config (--config) plus optional --seed / --out / --policy overrides, writes
its outputs atomically under the output directory together with a manifest
(config hash, seed, package version), and exits nonzero iff any error was
reported. EXWARP_THREADS caps per-episode parallelism.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, reporting
from .dataset import load_episode, save_dataset
from .errors import ExwarpError, ValidationError
from .metrics import aggregate_report
from .policies import TrainedPolicy, make_policy
from .predictor import save_checkpoint
from .scenegen import render_episode
from .scheduler import episode_env_vectors, run_episode
from .training import SceneFamily, cross_validate, train_policy
from .warp import hole_histogram, warp_frame

HOLE_BUCKETS = [0.05, 0.1, 0.2, 0.3, 0.5]


def _write_manifest(out: Path, command: str, cfg: dict, seed: int) -> None:
    reporting.write_json(out / f"{command}_manifest.json", {
        "command": command,
        "config_sha256": cfg.get("_config_sha256"),
        "seed": seed,
        "version": __version__,
    })


def _prepare(args, command: str, extra_validate):
    """Load config, apply overrides, run per-command validation."""
    cfg = cfgmod.load_config(args.config)
    base = Path(cfg["_config_path"]).resolve().parent
    errors: list[str] = []
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append("seed: must be a non-negative integer")
    out = args.out if args.out is not None else cfg.get("out")
    if out is None:
        errors.append("out: output directory required (config key `out` or --out)")
    payload = extra_validate(cfg, errors, base)
    if errors:
        raise ValidationError(errors)
    out = cfgmod.resolve_path(base, out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, command, cfg, seed)
    return cfg, base, seed, out, payload


def _dataset_label(path: Path) -> str:
    return f"{path.parent.name}_{path.name}" if path.parent.name else path.name


def _resolve_policy(name: str, base: Path, deadband=None):
    if name.startswith("trained:"):
        ckpt = name.split(":", 1)[1]
        resolved = ckpt if Path(ckpt).is_file() else str(base / ckpt)
        return make_policy(f"trained:{resolved}", deadband=deadband)
    return make_policy(name)


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    def validate(cfg, errors, base):
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        return cfgmod.scene_specs_from(cfg, errors, int(seed) if isinstance(seed, int) else 0)

    cfg, base, seed, out, specs = _prepare(args, "generate", validate)
    counters: dict[str, int] = {}
    written = []
    for family, index, spec in specs:
        frames, gbuffers = render_episode(spec)
        dest = out / "datasets" / family / f"ep{index:03d}"
        save_dataset(dest, frames, gbuffers, base_fps=spec.base_fps, rng_seed=spec.rng_seed)
        counters[family] = counters.get(family, 0) + 1
        written.append(str(dest.relative_to(out)))
        print(f"generated {dest} ({spec.width}x{spec.height}, "
              f"{spec.episode_len} base frames)")
    reporting.write_json(out / "generate_summary.json",
                         {"datasets": written, "per_family": counters})
    return 0


# ---------------------------------------------------------------------------
# run

def _run_one_dataset(path: Path, policy_name: str, base: Path, latency, out: Path,
                     deadband=None):
    episode = load_episode(path)
    policy = _resolve_policy(policy_name, base, deadband)
    traces, report, quality = run_episode(episode, policy, latency)

    label = _dataset_label(path)
    dest = out / "run" / label
    reporting.write_traces_jsonl(dest / "traces.jsonl", traces)
    reporting.write_json(dest / "fps.json", report.to_json_dict())
    reporting.write_quality_csv(dest / "quality.csv", traces)

    envs = episode_env_vectors(episode)
    feature_rows = [{
        "frame": t, "n_d": env.n_d, "emd_wn": env.emd_wn, "emd_wp": env.emd_wp,
        "var_x": env.var_x, "var_y": env.var_y, "r": env.r,
    } for t, env in enumerate(envs)]
    reporting.write_features_csv(dest / "features.csv", feature_rows)

    # Hole statistics: one 1-step warp per base frame.
    warped = [warp_frame(episode.frames[4 * t], gb.motion_dense, 1, gb.depth)
              for t, gb in enumerate(episode.gbuffers)]
    counts = hole_histogram(warped, HOLE_BUCKETS)
    reporting.write_csv(dest / "holes.csv",
                        [{"bucket": i, "count": int(c)} for i, c in enumerate(counts)],
                        ["bucket", "count"])
    reporting.figure_hole_histogram(dest / "figures" / "holes.png", counts, HOLE_BUCKETS,
                                    title=f"Warped-frame holes: {label}")
    reporting.figure_scenarios(dest / "figures" / "scenarios.png", report.scenario_counts,
                               title=f"Scenario mix: {label}")

    # Feature/quality correlation: per-interval motion variance vs 1-step warp PSNR.
    from . import metrics as m
    var_x = [envs[t].var_x for t in range(len(envs) - 1)]
    warp_psnr = [m.psnr(warped[t].pixels, episode.frames[4 * t + 1].pixels)
                 for t in range(len(envs) - 1)]
    reporting.write_csv(dest / "feature_quality.csv",
                        [{"frame": t, "var_x": v, "warp_psnr": p}
                         for t, (v, p) in enumerate(zip(var_x, warp_psnr))],
                        ["frame", "var_x", "warp_psnr"])
    reporting.figure_feature_quality(dest / "figures" / "feature_quality.png",
                                     var_x, warp_psnr,
                                     title=f"Variance vs warp quality: {label}")
    return label, report, quality


def cmd_run(args) -> int:
    def validate(cfg, errors, base):
        paths = cfgmod.dataset_paths(cfg, errors, base=base)
        policy_name = args.policy if args.policy is not None else cfg.get("policy")
        if policy_name is None:
            errors.append("policy: required for `run` (config key `policy` or --policy)")
        else:
            cfgmod.validate_policy_name(policy_name, "policy", errors, base=base)
        latency = cfgmod.latency_model_from(cfg, errors)
        return paths, policy_name, latency

    cfg, base, seed, out, (paths, policy_name, latency) = _prepare(args, "run", validate)
    deadband = cfg.get("deadband")
    workers = cfgmod.thread_count()
    results = []
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one_dataset, p, policy_name, base, latency, out,
                                   deadband) for p in paths]
            results = [f.result() for f in futures]
    else:
        results = [_run_one_dataset(p, policy_name, base, latency, out, deadband)
                   for p in paths]

    summary = {
        "policy": policy_name,
        "datasets": {label: {"fps": report.to_json_dict(), **quality}
                     for label, report, quality in results},
    }
    reporting.write_json(out / "run_summary.json", summary)
    for label, report, quality in results:
        line = f"{label}: effective {report.effective_fps:.1f} fps"
        if quality:
            line += f", mean PSNR {quality['mean_psnr']:.2f} dB"
        print(line)
    return 0


# ---------------------------------------------------------------------------
# train

def _load_families(family_paths: dict[str, list[Path]]) -> list[SceneFamily]:
    return [SceneFamily(name=name, episodes=[load_episode(p) for p in paths])
            for name, paths in family_paths.items()]


def cmd_train(args) -> int:
    def validate(cfg, errors, base):
        fams = cfgmod.family_dataset_paths(cfg, errors, base=base, minimum=1)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        tc = cfgmod.train_config_from(cfg, errors, int(seed) if isinstance(seed, int) else 0)
        latency = cfgmod.latency_model_from(cfg, errors)
        reward = cfgmod.reward_cfg_from(cfg, errors)
        return fams, tc, latency, reward

    cfg, base, seed, out, (fams, tc, latency, reward) = _prepare(args, "train", validate)
    families = _load_families(fams)
    episodes = [ep for fam in families for ep in fam.episodes]
    result = train_policy(episodes, tc, latency, reward)

    ckpt = out / "checkpoint.exwq"
    save_checkpoint(ckpt, result.net)
    reporting.write_csv(out / "training_log.csv",
                        [{"step": s, "loss": l, "epsilon": e,
                          "mean_q_warp": qw, "mean_q_extrapolate": qe}
                         for s, l, e, qw, qe in result.log_rows],
                        ["step", "loss", "epsilon", "mean_q_warp", "mean_q_extrapolate"])
    if result.log_rows:
        reporting.figure_training_curve(out / "figures" / "training.png", result.log_rows)
    print(f"trained on {result.experiences_seen} experiences -> {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# evaluate (leave-one-family-out)

def cmd_evaluate(args) -> int:
    def validate(cfg, errors, base):
        fams = cfgmod.family_dataset_paths(cfg, errors, base=base, minimum=2)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        tc = cfgmod.train_config_from(cfg, errors, int(seed) if isinstance(seed, int) else 0)
        latency = cfgmod.latency_model_from(cfg, errors)
        reward = cfgmod.reward_cfg_from(cfg, errors)
        return fams, tc, latency, reward

    cfg, base, seed, out, (fams, tc, latency, reward) = _prepare(args, "evaluate", validate)
    families = _load_families(fams)
    folds, mean = cross_validate(families, tc, latency, reward)

    rows = [{
        "held_out": f.held_out,
        "mean_psnr": f.evaluation.mean_psnr,
        "mean_ssim": f.evaluation.mean_ssim,
        "warp_ratio": f.evaluation.warp_ratio,
        "decisions": f.evaluation.decision_count,
    } for f in folds]
    rows.append({"held_out": "mean", "mean_psnr": mean["mean_psnr"],
                 "mean_ssim": mean["mean_ssim"], "warp_ratio": mean["warp_ratio"],
                 "decisions": sum(f.evaluation.decision_count for f in folds)})
    reporting.write_csv(out / "loocv.csv", rows,
                        ["held_out", "mean_psnr", "mean_ssim", "warp_ratio", "decisions"])
    reporting.write_json(out / "loocv.json", {"folds": rows[:-1], "mean": mean})
    reporting.figure_fold_results(out / "figures" / "loocv.png",
                                  [f.held_out for f in folds],
                                  [f.evaluation.mean_psnr for f in folds])
    for row in rows:
        print(f"{row['held_out']}: PSNR {row['mean_psnr']:.2f} dB, "
              f"SSIM {row['mean_ssim']:.4f}, warp ratio {row['warp_ratio']:.2f}")
    return 0


# ---------------------------------------------------------------------------
# compare

def _compare_one(policy_name: str, paths: list[Path], base: Path, latency,
                 deadband=None):
    policy = _resolve_policy(policy_name, base, deadband)
    all_traces = []
    base_fps = None
    for p in paths:
        episode = load_episode(p)
        base_fps = episode.base_fps
        traces, _, _ = run_episode(episode, policy, latency)
        all_traces.extend(traces)
    return aggregate_report(all_traces, policy=policy_name, base_fps=base_fps)


def cmd_compare(args) -> int:
    def validate(cfg, errors, base):
        paths = cfgmod.dataset_paths(cfg, errors, base=base)
        names = cfg.get("policies")
        if not isinstance(names, list) or not names:
            errors.append("policies: must be a non-empty list")
            names = []
        for i, name in enumerate(names):
            cfgmod.validate_policy_name(name, f"policies[{i}]", errors, base=base)
        latency = cfgmod.latency_model_from(cfg, errors)
        return paths, names, latency

    cfg, base, seed, out, (paths, names, latency) = _prepare(args, "compare", validate)
    deadband = cfg.get("deadband")
    workers = cfgmod.thread_count()
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_compare_one, n, paths, base, latency, deadband)
                       for n in names]
            per_policy = [f.result() for f in futures]
    else:
        per_policy = [_compare_one(n, paths, base, latency, deadband) for n in names]

    rows = [row for rows_ in per_policy for row in rows_]
    reporting.write_csv(out / "comparison.csv", rows,
                        ["policy", "scenario", "count", "mean_psnr", "mean_ssim",
                         "warp_ratio", "effective_fps"])
    reporting.write_json(out / "comparison.json", {"rows": rows})
    overall = [row for row in rows if row["scenario"] == "all"]
    reporting.figure_policy_comparison(out / "figures" / "comparison.png", overall)
    if overall and overall[0]["effective_fps"] is not None:
        base_fps = int(cfg.get("base_fps", 30))
        reporting.figure_fps(out / "figures" / "fps.png",
                             [r["policy"] for r in overall],
                             [r["effective_fps"] for r in overall], base_fps)
    for row in overall:
        print(f"{row['policy']}: PSNR {row['mean_psnr']:.2f} dB, "
              f"SSIM {row['mean_ssim']:.4f}, {row['effective_fps']:.1f} fps")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exwarp",
        description="Warp/extrapolate temporal supersampling simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "generate": (cmd_generate, "render scene families into datasets"),
        "run": (cmd_run, "run one policy over datasets, emit traces and reports"),
        "train": (cmd_train, "train the decision predictor, emit a checkpoint"),
        "evaluate": (cmd_evaluate, "leave-one-family-out cross-validation"),
        "compare": (cmd_compare, "compare policies on shared datasets"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--policy", default=None,
                       help="override policy (S1..S6, oracle, trained:<ckpt>)")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        return 1
    except ExwarpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
