"""File formats: camera specs, target layouts, observations, truth records,
calibration reports and configuration files.

Floats are written with Python's shortest round-trip representation, so
every file parses back to bit-identical values.  Non-finite entries of
``param_std`` and ``condition_number`` are written as ``null``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .calibrate.observations import ObservationSet
from .calibrate.refine import CalibConfig, CalibReport
from .evaluate import RunScore
from .geometry import Pose
from .models import CameraSpec
from .simulate import SimConfig, TruthRecord
from .targets import TargetLayout

__all__ = [
    "dumps",
    "read_json",
    "write_json",
    "read_spec",
    "write_spec",
    "read_target",
    "write_target",
    "read_observations",
    "write_observations",
    "read_truth",
    "write_truth",
    "report_to_dict",
    "report_from_dict",
    "read_report",
    "write_report",
    "score_to_dict",
    "score_from_dict",
    "read_config",
]


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_spec(path) -> CameraSpec:
    d = read_json(path)
    # a truth record also carries a spec
    return CameraSpec.from_dict(d["spec"] if "spec" in d and "kind" not in d else d)


def write_spec(path, spec: CameraSpec) -> None:
    write_json(path, spec.to_dict())


def read_target(path) -> TargetLayout:
    return TargetLayout.from_dict(read_json(path))


def write_target(path, target: TargetLayout) -> None:
    write_json(path, target.to_dict())


def read_observations(path) -> ObservationSet:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return ObservationSet.from_jsonl(text)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def write_observations(path, obs: ObservationSet) -> None:
    Path(path).write_text(obs.to_jsonl())


def read_truth(path) -> TruthRecord:
    return TruthRecord.from_dict(read_json(path))


def write_truth(path, truth: TruthRecord, sim_config: SimConfig | None = None) -> None:
    d = truth.to_dict()
    if sim_config is not None:
        d["config"] = sim_config.to_dict()
    write_json(path, d)


def report_to_dict(report: CalibReport) -> dict:
    ids = sorted(report.poses)
    return {
        "config": report.config.to_dict() if report.config else None,
        "spec": report.spec.to_dict(),
        "param_names": list(report.spec.param_names),
        "rms": float(report.rms),
        "param_std": [_finite_or_none(v) for v in report.param_std],
        "condition_number": _finite_or_none(report.condition_number),
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "inliers_used": int(report.inliers_used),
        "trimmed": int(report.trimmed),
        "dropped_frames": [int(i) for i in report.dropped_frames],
        "frame_ids": ids,
        "poses": [report.poses[i].to_list() for i in ids],
        "cost_history": [float(c) for c in report.cost_history],
    }


def report_from_dict(d) -> CalibReport:
    spec = CameraSpec.from_dict(d["spec"])
    cond = d.get("condition_number")
    return CalibReport(
        spec=spec,
        poses={int(i): Pose.from_list(p) for i, p in zip(d["frame_ids"], d["poses"])},
        rms=float(d["rms"]),
        param_std=np.array([np.nan if v is None else float(v) for v in d["param_std"]]),
        inliers_used=int(d["inliers_used"]),
        trimmed=int(d["trimmed"]),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        condition_number=float("inf") if cond is None else float(cond),
        cost_history=[float(c) for c in d.get("cost_history", [])],
        dropped_frames=[int(i) for i in d.get("dropped_frames", [])],
        config=CalibConfig.from_dict(d["config"]) if d.get("config") else None,
    )


def read_report(path) -> CalibReport:
    return report_from_dict(read_json(path))


def write_report(path, report: CalibReport) -> None:
    write_json(path, report_to_dict(report))


def score_to_dict(score: RunScore) -> dict:
    return {
        "group": score.group,
        "model": score.model,
        "config": score.config,
        "seed": score.seed,
        "param_names": list(score.param_names),
        "param_errors": None if score.param_errors is None else [float(v) for v in score.param_errors],
        "focal_error_max": _finite_or_none(score.focal_error_max),
        "rms": _finite_or_none(score.rms),
        "failed": bool(score.failed),
        "failure_reason": score.failure_reason,
    }


def score_from_dict(d) -> RunScore:
    errs = d.get("param_errors")
    fe, rms = d.get("focal_error_max"), d.get("rms")
    return RunScore(
        model=d["model"],
        param_names=tuple(d.get("param_names", ())),
        param_errors=None if errs is None else np.array(errs, dtype=float),
        focal_error_max=float("nan") if fe is None else float(fe),
        rms=float("nan") if rms is None else float(rms),
        failed=bool(d["failed"]),
        failure_reason=d["failure_reason"],
        group=d.get("group", ""),
        config=d.get("config", ""),
        seed=d.get("seed"),
    )


def read_config(path) -> dict:
    """Configuration file: JSON object with optional ``calibrate``,
    ``simulate`` and ``study`` sections."""
    d = read_json(path)
    if not isinstance(d, dict):
        raise ValueError(f"{path}: configuration must be a JSON object")
    unknown = set(d) - {"calibrate", "simulate", "study"}
    if unknown:
        raise ValueError(f"{path}: unknown configuration sections {sorted(unknown)}")
    return d
