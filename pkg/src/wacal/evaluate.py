"""Scoring calibration runs against ground truth and aggregating over runs.

A run fails when no solution was produced, when the optimizer did not
converge, or when either recovered focal length is off by 100 px or more.
Box-plot statistics use only the runs that did not fail; failure counts
use all of them.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .calibrate.refine import CalibReport
from .models import CameraSpec, canonical_spec, focal_of

__all__ = [
    "FAILURE_REASONS",
    "FOCAL_RULE_PX",
    "FOCAL_COMPARISON",
    "QUANTILE_STATS",
    "RunScore",
    "StudySummary",
    "classify_failure",
    "score_run",
    "aggregate",
    "quantiles",
]

FAILURE_REASONS = ("none", "no_solution", "focal_rule", "non_convergence")
FOCAL_RULE_PX = 100.0
QUANTILE_STATS = ("min", "q1", "median", "q3", "max")

# focal-length-like quantity of each kind, used when truth and estimate
# differ in kind; all are in pixels
FOCAL_COMPARISON = {
    "Pinhole": "(f_x, f_y)",
    "RadTan": "(f_x, f_y)",
    "RadTanBackward": "(f_x, f_y)",
    "Division": "(f_x, f_y)",
    "Rational": "(f_x, f_y)",
    "ThinPrism": "(f_x, f_y)",
    "KB8": "(f_x, f_y)",
    "FOV": "(f_x, f_y)",
    "DS": "(f_x, f_y)",
    "EUCM": "(f_x, f_y)",
    "UCMAlpha": "(f_x, f_y)",
    "UCM": "(gamma_x, gamma_y) / (1 + xi)",
    "Mei": "(gamma_x, gamma_y) / (1 + xi)",
    "Scaramuzza": "(a0, a0)",
}


@dataclass(eq=False)
class RunScore:
    model: str
    param_names: tuple[str, ...]
    param_errors: np.ndarray | None
    focal_error_max: float
    rms: float
    failed: bool
    failure_reason: str = "none"
    group: str = ""
    config: str = ""
    seed: int | None = None

    def __post_init__(self):
        if self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.failure_reason!r}")
        if self.failed != (self.failure_reason != "none"):
            raise ValueError("failed must agree with failure_reason")

    @property
    def excluded(self) -> bool:
        """Left out of box-plot statistics."""
        return self.failed


def _focal_pair(spec: CameraSpec) -> np.ndarray:
    if spec.kind not in FOCAL_COMPARISON:
        raise ValueError(f"no focal comparison declared for {spec.kind}")
    return np.array(focal_of(spec), dtype=float)


def classify_failure(report: CalibReport | None, truth: CameraSpec, model: str | None = None) -> RunScore:
    """Apply the failure rule; ``report=None`` means no solution was found.

    ``model`` names the estimated kind when there is no report.
    """
    kind = report.spec.kind if report is not None else (model or truth.kind)
    if report is None:
        return RunScore(kind, (), None, float("nan"), float("nan"), True, "no_solution")
    if report.spec.kind != truth.kind and (
        report.spec.kind not in FOCAL_COMPARISON or truth.kind not in FOCAL_COMPARISON
    ):
        raise ValueError(f"focal lengths of {report.spec.kind} and {truth.kind} are not comparable")
    df = float(np.max(np.abs(_focal_pair(report.spec) - _focal_pair(truth))))
    if not report.converged:
        reason = "non_convergence"
    elif not np.isfinite(df) or df >= FOCAL_RULE_PX:
        reason = "focal_rule"
    else:
        reason = "none"
    return RunScore(kind, report.spec.param_names, None, df, float(report.rms), reason != "none", reason)


def score_run(report: CalibReport | None, truth: CameraSpec, truth_poses=None, *, group: str = "",
              config: str = "", seed: int | None = None, model: str | None = None) -> RunScore:
    """Per-parameter errors (estimate minus truth, layout order) plus the
    failure classification.

    Kinds with a gauge freedom are compared after mapping both specs to the
    optimizer's gauge.  ``truth_poses`` is accepted for symmetry with the
    truth record and is not needed for intrinsic errors.
    """
    score = classify_failure(report, truth, model)
    score.group, score.config, score.seed = group, config, seed
    if report is None:
        score.param_names = truth.param_names
        return score
    if report.spec.kind != truth.kind or len(report.spec.params) != len(truth.params):
        raise ValueError(f"parameter layouts differ: {report.spec.kind} vs {truth.kind}")
    est = canonical_spec(report.spec).p
    ref = canonical_spec(truth).p
    score.param_errors = est - ref
    return score


def quantiles(values) -> dict[str, float]:
    """min, q1, median, q3, max with linear interpolation between order
    statistics (Hyndman-Fan type 7)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {k: float("nan") for k in QUANTILE_STATS}
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return dict(zip(QUANTILE_STATS, map(float, q)))


@dataclass
class GroupSummary:
    group: str
    model: str
    config: str
    runs: int
    failures: int
    # param name -> stat -> value (NaN when no run survived)
    stats: dict[str, dict[str, float]] = field(default_factory=dict)
    failure_reasons: dict[str, int] = field(default_factory=dict)

    @property
    def available(self) -> bool:
        return self.runs > self.failures


@dataclass
class StudySummary:
    groups: list[GroupSummary]

    def rows(self) -> list[tuple[str, str, str, str, float]]:
        """(group, model, param, stat, value) rows of the summary CSV.

        Per group: every parameter error and ``rms`` with the five quantile
        statistics, then ``failures`` with stats ``count`` and ``runs``.
        """
        out = []
        for g in self.groups:
            label = _label(g.group, g.config)
            for name, st in g.stats.items():
                for stat in QUANTILE_STATS:
                    out.append((label, g.model, name, stat, st[stat]))
            out.append((label, g.model, "failures", "count", float(g.failures)))
            out.append((label, g.model, "failures", "runs", float(g.runs)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "model", "param", "stat", "value"])
        for row in self.rows():
            w.writerow([*row[:4], repr(float(row[4]))])
        return buf.getvalue()

    @staticmethod
    def read_csv(text: str) -> list[tuple[str, str, str, str, float]]:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["group", "model", "param", "stat", "value"]:
            raise ValueError("not a study summary CSV")
        return [(g, m, p, s, float(v)) for g, m, p, s, v in rows[1:]]

    def failure_table(self) -> str:
        """Tab-separated table shaped like a lens-by-tool failure table:
        one row per group, one column per config, cells ``model, s: k/n``
        (the count is omitted when no run failed)."""
        groups = list(dict.fromkeys(g.group for g in self.groups))
        configs = list(dict.fromkeys(g.config for g in self.groups))
        cells = defaultdict(list)
        for g in self.groups:
            text = g.model if g.failures == 0 else f"{g.model}, s: {g.failures}/{g.runs}"
            cells[(g.group, g.config)].append(text)
        lines = ["\t".join(["group", *[c or "default" for c in configs]])]
        for grp in groups:
            lines.append("\t".join([grp, *["; ".join(cells.get((grp, c), ["N/A"])) for c in configs]]))
        return "\n".join(lines) + "\n"


def _label(group: str, config: str) -> str:
    return f"{group}/{config}" if config else group


def aggregate(scores, grouping=("group", "model", "config")) -> StudySummary:
    """Quantiles of parameter errors and RMS over non-failed runs, and
    failure counts over all runs, per group.

    ``grouping`` names the :class:`RunScore` attributes forming the key.
    The result does not depend on the order of ``scores``.
    """
    buckets: dict[tuple, list[RunScore]] = defaultdict(list)
    for s in scores:
        key = tuple(getattr(s, k) for k in grouping)
        buckets[key].append(s)
    groups = []
    for key in sorted(buckets, key=lambda k: tuple(str(v) for v in k)):
        runs = buckets[key]
        first = runs[0]
        names = next((r.param_names for r in runs if r.param_names), ())
        ok = [r for r in runs if not r.failed]
        # sort so the float sums inside the quantiles see a fixed order
        stats = {}
        for j, name in enumerate(names):
            vals = sorted(float(r.param_errors[j]) for r in ok if r.param_errors is not None)
            stats[name] = quantiles(vals)
        stats["rms"] = quantiles(sorted(r.rms for r in ok))
        reasons = defaultdict(int)
        for r in runs:
            if r.failed:
                reasons[r.failure_reason] += 1
        attrs = dict(zip(grouping, key))
        groups.append(GroupSummary(
            group=str(attrs.get("group", first.group)),
            model=str(attrs.get("model", first.model)),
            config=str(attrs.get("config", first.config)),
            runs=len(runs),
            failures=len(runs) - len(ok),
            stats=stats,
            failure_reasons=dict(reasons),
        ))
    return StudySummary(groups)
