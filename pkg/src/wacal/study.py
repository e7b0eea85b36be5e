"""Simulation studies: simulate, calibrate and score over a list of seeds.

Each seed is an independent pipeline, so seeds may run in separate
processes; results are ordered by seed and model regardless of scheduling.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .calibrate import CalibConfig, CalibrationError, calibrate, initialize
from .calibrate.refine import CalibReport
from .evaluate import RunScore, StudySummary, aggregate, classify_failure, score_run
from .models import CameraSpec, canonical_kind
from .simulate import SimConfig, sample_poses, synthesize_observations
from .targets import TargetLayout, make_target

log = logging.getLogger(__name__)

__all__ = ["StudyConfig", "SeedResult", "default_target", "job_limit", "run_seed", "run_study"]


def default_target() -> TargetLayout:
    """6 x 6 AprilGrid with 88 mm tags and 0.3 gap ratio."""
    return make_target("AprilGrid", 6, 6, 0.088, 0.3)


@dataclass(frozen=True)
class StudyConfig:
    truth: CameraSpec
    models: tuple[str, ...]
    seeds: tuple[int, ...] = tuple(range(9))
    target: TargetLayout = field(default_factory=default_target)
    sim: SimConfig = field(default_factory=SimConfig)
    calib: CalibConfig = field(default_factory=CalibConfig)
    group: str = ""
    # multiplies the initial focal estimate (fault injection)
    init_focal_scale: float = 1.0
    # meta for estimated specs of the same kind as the truth
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(canonical_kind(m) for m in self.models))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.models:
            raise ValueError("at least one model kind is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.init_focal_scale > 0:
            raise ValueError("init_focal_scale must be positive")


@dataclass(eq=False)
class SeedResult:
    seed: int
    scores: list[RunScore]
    reports: list[CalibReport | None]
    truth_poses: dict


def job_limit(requested: int | None = None) -> int:
    """Worker count: ``requested`` (default: CPU count) capped by WACAL_JOBS."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("WACAL_JOBS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"WACAL_JOBS must be an integer, got {cap!r}") from None
    return max(1, n)


def _calib_one(study: StudyConfig, obs, kind: str) -> CalibReport | None:
    truth = study.truth
    meta = study.meta if kind == truth.kind else {}
    config = replace(study.calib, model_kind=kind)
    try:
        init = None
        if study.init_focal_scale != 1.0:
            init, _ = initialize(obs, study.target, kind, truth.width, truth.height, meta)
            p = init.p
            p[list(init.model.focal_indices)] *= study.init_focal_scale
            init = init.with_params(p)
        return calibrate(obs, study.target, truth.width, truth.height, config, meta, init_spec=init)
    except (CalibrationError, np.linalg.LinAlgError) as exc:
        log.warning("seed run for %s produced no solution: %s", kind, exc)
        return None


def run_seed(study: StudyConfig, seed: int) -> SeedResult:
    """Simulate one sequence and calibrate every requested model on it."""
    sim = replace(study.sim, seed=seed)
    poses = sample_poses(study.truth, study.target, sim)
    obs, truth = synthesize_observations(study.truth, study.target, poses, sim)
    scores, reports = [], []
    for kind in study.models:
        report = _calib_one(study, obs, kind)
        if kind == study.truth.kind:
            score = score_run(report, study.truth, truth.poses, group=study.group,
                              config=_config_label(study), seed=seed, model=kind)
        else:
            score = classify_failure(report, study.truth, kind)
            score.group, score.config, score.seed = study.group, _config_label(study), seed
        scores.append(score)
        reports.append(report)
    return SeedResult(seed, scores, reports, truth.poses)


def _config_label(study: StudyConfig) -> str:
    loss = study.calib.loss
    label = loss.kind if loss.kind == "none" else f"{loss.kind}{loss.scale:g}"
    return f"{label}-trim{study.calib.trim_threshold:g}x{study.calib.trim_rounds}"


def run_study(study: StudyConfig, jobs: int | None = None) -> tuple[StudySummary, list[SeedResult]]:
    """Run every seed (in parallel up to :func:`job_limit`) and aggregate."""
    n = min(job_limit(jobs), len(study.seeds))
    if n == 1:
        results = [run_seed(study, s) for s in study.seeds]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(run_seed, [study] * len(study.seeds), study.seeds))
    results.sort(key=lambda r: r.seed)
    scores = [s for r in results for s in r.scores]
    return aggregate(scores), results
