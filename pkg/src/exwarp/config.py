"""Run configuration: a single YAML file with nested (dotted-path) keys.

Validation collects every violation before failing, so a bad config reports
all offending keys at once. Paper-derived constants (latencies, reward
shaping, training hyperparameters) are all overridable here and default to
their published values.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import yaml

from .errors import ValidationError
from .extrapolate import (RESOLUTION_CLASSES, LatencyModel, StageLatency,
                          default_latency_model)
from .predictor import DROP_PENALTY, PSNR_DELTA_SCALE, TrainConfig
from .scenegen import (BackgroundSpec, CameraSpec, LinearPath, ObjectSpec,
                       PiecewiseLinearPath, SceneSpec, SinusoidalPath)
from .suite import FAMILY_NAMES, family_spec

_POLICY_NAMES = ("S1", "S2", "S3", "S4", "S5", "S6", "oracle")


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config: file {path} does not exist")
    cfg = yaml.safe_load(path.read_text())
    if not isinstance(cfg, dict):
        raise ValidationError("config: top level must be a mapping")
    cfg["_config_path"] = str(path)
    cfg["_config_sha256"] = hashlib.sha256(path.read_bytes()).hexdigest()
    return cfg


def thread_count() -> int:
    """Worker cap for per-episode parallelism, from EXWARP_THREADS."""
    try:
        return max(1, int(os.environ.get("EXWARP_THREADS", "1")))
    except ValueError:
        return 1


def _policy_ok(name: str) -> bool:
    return name in _POLICY_NAMES or name.startswith("trained:")


def validate_policy_name(name, key: str, errors: list, *, base: Path) -> None:
    if not isinstance(name, str) or not _policy_ok(name):
        errors.append(f"{key}: {name!r} is not S1..S6, oracle, or trained:<checkpoint>")
        return
    if name.startswith("trained:"):
        ckpt = name.split(":", 1)[1]
        if not (base / ckpt).is_file() and not Path(ckpt).is_file():
            errors.append(f"{key}: checkpoint {ckpt!r} does not exist")


def resolve_path(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def dataset_paths(cfg: dict, errors: list, *, base: Path, key: str = "datasets") -> list[Path]:
    raw = cfg.get(key)
    if not isinstance(raw, list) or not raw:
        errors.append(f"{key}: must be a non-empty list of dataset directories")
        return []
    out = []
    for i, entry in enumerate(raw):
        path = resolve_path(base, entry)
        if not (path / "manifest.json").is_file():
            errors.append(f"{key}[{i}]: {entry!r} is not a dataset directory "
                          "(manifest.json missing)")
        else:
            out.append(path)
    return out


def family_dataset_paths(cfg: dict, errors: list, *, base: Path,
                         minimum: int = 1) -> dict[str, list[Path]]:
    """families: mapping name -> dataset dir list, or a parent directory whose
    dataset subdirectories (sorted) make up the family."""
    raw = cfg.get("families")
    if not isinstance(raw, dict) or len(raw) < minimum:
        errors.append(f"families: must map at least {minimum} family name(s) "
                      "to dataset paths")
        return {}
    out: dict[str, list[Path]] = {}
    for name, value in raw.items():
        entries = value if isinstance(value, list) else [value]
        paths = []
        for i, entry in enumerate(entries):
            path = resolve_path(base, entry)
            if (path / "manifest.json").is_file():
                paths.append(path)
            elif path.is_dir():
                subs = sorted(p for p in path.iterdir() if (p / "manifest.json").is_file())
                if not subs:
                    errors.append(f"families.{name}[{i}]: {entry!r} contains no datasets")
                paths.extend(subs)
            else:
                errors.append(f"families.{name}[{i}]: {entry!r} does not exist")
        out[name] = paths
    return out


def latency_model_from(cfg: dict, errors: list) -> LatencyModel:
    section = cfg.get("latency")
    if section is None:
        return default_latency_model()
    if not isinstance(section, dict):
        errors.append("latency: must be a mapping of resolution classes")
        return default_latency_model()
    default = default_latency_model()
    classes = dict(default.classes)
    for cls_name, stages in section.items():
        if str(cls_name) not in RESOLUTION_CLASSES:
            errors.append(f"latency.{cls_name}: unknown resolution class")
            continue
        base_stage = classes[str(cls_name)]
        values = {f: getattr(base_stage, f) for f in
                  ("gbuffer_ms", "warp_ms", "hole_mark_ms", "inference_ms")}
        for stage_key, v in (stages or {}).items():
            if stage_key not in values:
                errors.append(f"latency.{cls_name}.{stage_key}: unknown stage")
                continue
            values[stage_key] = v
        try:
            classes[str(cls_name)] = StageLatency(**values)
        except TypeError:
            errors.append(f"latency.{cls_name}: malformed stage mapping")
    try:
        return LatencyModel(classes=classes)
    except ValidationError as exc:
        errors.extend(exc.violations)
        return default


def train_config_from(cfg: dict, errors: list, seed: int) -> TrainConfig:
    section = cfg.get("train") or {}
    if not isinstance(section, dict):
        errors.append("train: must be a mapping")
        section = {}
    known = {f.name for f in TrainConfig.__dataclass_fields__.values()}
    kwargs = {}
    for key, value in section.items():
        if key not in known or key == "rng_seed":
            errors.append(f"train.{key}: unknown or reserved key")
            continue
        kwargs[key] = value
    try:
        return TrainConfig(rng_seed=seed, **kwargs)
    except (ValidationError, TypeError) as exc:
        if isinstance(exc, ValidationError):
            errors.extend(f"train.{v}" for v in exc.violations)
        else:
            errors.append(f"train: {exc}")
        return TrainConfig(rng_seed=seed)


def reward_cfg_from(cfg: dict, errors: list) -> dict:
    section = cfg.get("reward") or {}
    if not isinstance(section, dict):
        errors.append("reward: must be a mapping")
        section = {}
    out = {"psnr_scale": PSNR_DELTA_SCALE, "drop_penalty": DROP_PENALTY}
    for key, value in section.items():
        if key not in out:
            errors.append(f"reward.{key}: unknown key")
            continue
        if not isinstance(value, (int, float)):
            errors.append(f"reward.{key}: must be numeric")
            continue
        out[key] = float(value)
    if out["psnr_scale"] <= 0:
        errors.append("reward.psnr_scale: must be positive")
    return out


def _trajectory_from(spec: dict, key: str, errors: list):
    kind = spec.get("kind", "linear")
    try:
        if kind == "linear":
            return LinearPath(start=tuple(spec["start"]),
                              velocity=tuple(spec.get("velocity", (0.0, 0.0))))
        if kind == "sinusoidal":
            return SinusoidalPath(center=tuple(spec["center"]),
                                  amplitude=tuple(spec["amplitude"]),
                                  period=float(spec["period"]),
                                  phase=float(spec.get("phase", 0.0)))
        if kind == "piecewise":
            return PiecewiseLinearPath(
                knots=tuple((float(t), tuple(p)) for t, p in spec["knots"]))
    except (KeyError, TypeError, ValidationError) as exc:
        errors.append(f"{key}: malformed {kind} trajectory ({exc})")
        return None
    errors.append(f"{key}.kind: {kind!r} not one of linear, sinusoidal, piecewise")
    return None


def scene_specs_from(cfg: dict, errors: list, seed: int) -> list[tuple[str, int, SceneSpec]]:
    """Expand the scenes section into (family, episode index, spec) triples."""
    section = cfg.get("scenes")
    if not isinstance(section, dict) or not isinstance(section.get("families"), list) \
            or not section["families"]:
        errors.append("scenes.families: must be a non-empty list")
        return []
    width = int(section.get("width", 96))
    height = int(section.get("height", 64))
    episode_len = int(section.get("episode_len", 20))
    base_fps = int(section.get("base_fps", cfg.get("base_fps", 30)))
    out = []
    for fi, fam in enumerate(section["families"]):
        key = f"scenes.families[{fi}]"
        if not isinstance(fam, dict) or "name" not in fam:
            errors.append(f"{key}.name: required")
            continue
        name = str(fam["name"])
        episodes = int(fam.get("episodes", 1))
        if episodes < 1:
            errors.append(f"{key}.episodes: must be >= 1")
            continue
        preset = fam.get("preset")
        if preset is not None:
            if preset not in FAMILY_NAMES:
                errors.append(f"{key}.preset: {preset!r} not one of {FAMILY_NAMES}")
                continue
            for i in range(episodes):
                out.append((name, i, family_spec(
                    preset, i, base_seed=seed, width=int(fam.get("width", width)),
                    height=int(fam.get("height", height)),
                    episode_len=int(fam.get("episode_len", episode_len)),
                    base_fps=base_fps)))
            continue
        objects = []
        for oi, obj in enumerate(fam.get("objects", [])):
            okey = f"{key}.objects[{oi}]"
            traj = _trajectory_from(obj.get("trajectory", {}), f"{okey}.trajectory", errors)
            if traj is None:
                continue
            try:
                objects.append(ObjectSpec(
                    shape=obj.get("shape", "rect"), size=float(obj.get("size", 16)),
                    trajectory=traj, depth=float(obj.get("depth", 100.0)),
                    object_id=int(obj.get("object_id", oi + 1)),
                    normal_profile=obj.get("normal_profile", "flat")))
            except (TypeError, ValueError) as exc:
                errors.append(f"{okey}: {exc}")
        cam = fam.get("camera", {}) or {}
        camera = CameraSpec(pan_velocity=tuple(cam.get("pan_velocity", (0.0, 0.0))),
                            zoom_rate=float(cam.get("zoom_rate", 1.0)))
        bg = fam.get("background", {}) or {}
        background = BackgroundSpec(kind=bg.get("kind", "textured-noise"),
                                    seed=int(bg.get("seed", seed & 0xFFFF)))
        for i in range(episodes):
            spec = SceneSpec(
                width=int(fam.get("width", width)), height=int(fam.get("height", height)),
                episode_len=int(fam.get("episode_len", episode_len)), base_fps=base_fps,
                background=background, objects=tuple(objects), camera=camera,
                rng_seed=seed + 7919 * i)
            try:
                spec.validate()
            except ValidationError as exc:
                errors.extend(f"{key}: {v}" for v in exc.violations)
                break
            out.append((name, i, spec))
    return out
