"""Report emission: CSV/JSON tables and the matplotlib figures rendered
alongside them. All writes are atomic (temp file + rename) and byte-stable
for identical inputs."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

FIGURE_DPI = 110


def write_atomic(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    write_atomic(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_csv(path, rows, columns) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _fmt(row.get(c)) for c in columns})
    write_atomic(path, buf.getvalue().encode())


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def write_traces_jsonl(path, traces) -> None:
    lines = [json.dumps(tr.to_json_dict(), sort_keys=True) for tr in traces]
    write_atomic(path, ("\n".join(lines) + "\n").encode())


def _save_fig(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=FIGURE_DPI)
    plt.close(fig)
    write_atomic(path, buf.getvalue())


def figure_hole_histogram(path, counts, thresholds, title="Warped-frame holes") -> None:
    edges = [0.0, *thresholds, 1.0]
    labels = [f"{100 * a:g}-{100 * b:g}%" for a, b in zip(edges, edges[1:])]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(counts)), counts, color="#4878a8")
    ax.set_xticks(range(len(counts)), labels, rotation=30, ha="right")
    ax.set_xlabel("hole fraction")
    ax.set_ylabel("frames")
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_scenarios(path, scenario_counts: dict, title="Scenario mix") -> None:
    names = sorted(scenario_counts)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, [scenario_counts[n] for n in names], color="#6a9a58")
    ax.set_ylabel("intervals")
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_policy_comparison(path, rows, title="Policy comparison") -> None:
    """Grouped bars of mean PSNR per policy with effective fps labels."""
    policies = [r["policy"] for r in rows]
    psnr = [r["mean_psnr"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(policies, psnr, color="#4878a8")
    ax1.set_ylabel("mean PSNR (dB)")
    ax1.tick_params(axis="x", rotation=30)
    ax2.bar(policies, [r["mean_ssim"] for r in rows], color="#a85858")
    ax2.set_ylabel("mean SSIM")
    ax2.tick_params(axis="x", rotation=30)
    fig.suptitle(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_training_curve(path, log_rows, title="Training") -> None:
    steps = [r[0] for r in log_rows]
    losses = [r[1] for r in log_rows]
    q_w = [r[3] for r in log_rows]
    q_e = [r[4] for r in log_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(steps, losses, lw=0.8, color="#4878a8")
    ax1.set_xlabel("step")
    ax1.set_ylabel("TD loss")
    ax1.set_yscale("log")
    ax2.plot(steps, q_w, lw=0.8, label="Q warp")
    ax2.plot(steps, q_e, lw=0.8, label="Q extrapolate")
    ax2.set_xlabel("step")
    ax2.legend()
    fig.suptitle(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_feature_quality(path, var_x, psnr, title="Motion variance vs warp quality") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter(var_x, psnr, s=14, color="#4878a8")
    ax.set_xlabel("block motion variance (x)")
    ax.set_ylabel("warped-frame PSNR (dB)")
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_fold_results(path, fold_names, psnr_values, title="Held-out family quality") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(fold_names, psnr_values, color="#6a9a58")
    ax.set_ylabel("mean PSNR (dB)")
    ax.tick_params(axis="x", rotation=30)
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)


def figure_fps(path, labels, fps_values, base_fps, title="Effective frame rate") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(labels, fps_values, color="#8868a8")
    ax.axhline(base_fps, color="gray", ls="--", lw=1, label=f"base {base_fps} fps")
    ax.axhline(4 * base_fps, color="black", ls=":", lw=1, label=f"4x ({4 * base_fps} fps)")
    ax.set_ylabel("fps")
    ax.tick_params(axis="x", rotation=30)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)


def write_features_csv(path, rows) -> None:
    """Per-base-frame feature dump."""
    write_csv(path, rows, ["frame", "n_d", "emd_wn", "emd_wp", "var_x", "var_y", "r"])


def write_quality_csv(path, traces) -> None:
    rows = []
    for tr in traces:
        row = {"interval": tr.interval_index, "scenario": tr.scenario,
               "dropped": tr.dropped_slots}
        for i, slot in enumerate(tr.displayed, start=1):
            row[f"psnr_p{i}"] = slot.psnr
            row[f"ssim_p{i}"] = slot.ssim
        rows.append(row)
    write_csv(path, rows, ["interval", "scenario", "psnr_p1", "psnr_p2", "psnr_p3",
                           "ssim_p1", "ssim_p2", "ssim_p3", "dropped"])
