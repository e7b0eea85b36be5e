"""Command-line entry points: ``wacal calibrate | simulate | evaluate | study``.

Exit codes: 0 success, 2 calibration reported failure (the report is still
written), 1 input/output or precondition error.  Settings come from, in
decreasing priority, command-line flags, the ``--config`` JSON file and
built-in defaults; the effective settings are echoed into every report.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .calibrate import CalibConfig, CalibrationError, RobustLoss, calibrate
from .evaluate import score_run
from .models import CameraSpec, ParameterError
from .simulate import PoseSampler, SamplingError, SimConfig, sample_poses, synthesize_observations
from .study import StudyConfig, default_target, run_study

log = logging.getLogger("wacal")

__all__ = ["RunManifest", "main", "build_parser", "cmd_calibrate", "cmd_simulate", "cmd_evaluate", "cmd_study"]

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    paths: dict[str, Path] = field(default_factory=dict)
    calib: CalibConfig = field(default_factory=CalibConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    seeds: tuple[int, ...] = tuple(range(9))
    width: int | None = None
    height: int | None = None
    meta: dict = field(default_factory=dict)
    models: tuple[str, ...] = ()
    jobs: int | None = None
    group: str = ""
    init_focal_scale: float = 1.0

    def require(self, *names: str) -> None:
        """Inputs must exist; the output location must be creatable."""
        for name in names:
            path = self.paths.get(name)
            if path is None:
                raise ValueError(f"--{name} is required")
            if name != "out" and not path.exists():
                raise FileNotFoundError(f"input file not found: {path}")


def _pick(cli, section: dict, key: str, default):
    if cli is not None:
        return cli
    if key in section:
        return section[key]
    return default


def _pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in str(text).split(",")]
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'lo,hi'")
    return parts[0], parts[1]


def _calib_config(args, section: dict) -> CalibConfig:
    d = CalibConfig()
    loss_sec = section.get("loss", {})
    loss = RobustLoss(
        _pick(args.loss, loss_sec, "kind", d.loss.kind),
        float(_pick(args.loss_scale, loss_sec, "scale", d.loss.scale)),
    )
    return CalibConfig(
        model_kind=_pick(getattr(args, "model", None), section, "model_kind", d.model_kind),
        loss=loss,
        trim_threshold=float(_pick(args.trim, section, "trim_threshold", d.trim_threshold)),
        trim_rounds=int(_pick(args.trim_rounds, section, "trim_rounds", d.trim_rounds)),
        max_lm_iterations=int(_pick(args.max_iter, section, "max_lm_iterations", d.max_lm_iterations)),
        lm_tolerance=float(_pick(args.tol, section, "lm_tolerance", d.lm_tolerance)),
    )


def _sim_config(args, section: dict) -> SimConfig:
    d = SimConfig()
    ps = section.get("pose_sampler", {})
    sampler = PoseSampler(
        tuple(_pick(args.distance, ps, "distance_range", d.pose_sampler.distance_range)),
        float(_pick(args.max_tilt, ps, "max_tilt", d.pose_sampler.max_tilt)),
        float(_pick(args.in_image, ps, "in_image_fraction", d.pose_sampler.in_image_fraction)),
    )
    return SimConfig(
        noise_sigma=float(_pick(args.sigma, section, "noise_sigma", d.noise_sigma)),
        frames=int(_pick(args.frames, section, "frames", d.frames)),
        seed=int(_pick(getattr(args, "seed", None), section, "seed", d.seed)),
        pose_sampler=sampler,
        drop_invalid=bool(section.get("drop_invalid", d.drop_invalid)),
        circle_bias=bool(section.get("circle_bias", d.circle_bias)),
    )


def manifest_from_args(args) -> RunManifest:
    cfg = io.read_config(args.config) if getattr(args, "config", None) else {}
    m = RunManifest(args.command)
    for name in ("target", "obs", "truth", "report", "out"):
        value = getattr(args, name, None)
        if value is not None:
            m.paths[name] = Path(value)
    if args.command in ("calibrate", "study"):
        m.calib = _calib_config(args, cfg.get("calibrate", {}))
    if args.command in ("simulate", "study"):
        m.sim = _sim_config(args, cfg.get("simulate", {}))
    if args.command == "calibrate":
        sec = cfg.get("calibrate", {})
        if args.model is None and "model_kind" not in sec:
            raise ValueError("--model is required")
        m.width = _pick(args.width, sec, "width", None)
        m.height = _pick(args.height, sec, "height", None)
        meta = args.meta if args.meta is not None else sec.get("meta")
        m.meta = json.loads(meta) if isinstance(meta, str) else dict(meta or {})
    if args.command == "study":
        sec = cfg.get("study", {})
        n = _pick(args.seeds, sec, "seeds", 9)
        m.seeds = tuple(range(n)) if isinstance(n, int) else tuple(int(s) for s in n)
        models = _pick(args.models, sec, "models", None)
        if isinstance(models, str):
            models = [s.strip() for s in models.split(",") if s.strip()]
        m.models = tuple(models or ())
        m.jobs = _pick(args.jobs, sec, "jobs", None)
        m.group = _pick(args.group, sec, "group", "")
        m.init_focal_scale = float(_pick(args.init_focal_scale, sec, "init_focal_scale", 1.0))
    return m


def _print_params(spec: CameraSpec, std) -> None:
    print(f"{'param':>10} {'value':>22} {'std':>12}")
    for name, v, s in zip(spec.param_names, spec.params, std):
        print(f"{name:>10} {v:>22.12g} {s:>12.4g}")


def cmd_calibrate(m: RunManifest) -> int:
    m.require("target", "obs", "out")
    if not m.width or not m.height:
        raise ValueError("image size is required (--width/--height or the config file)")
    target = io.read_target(m.paths["target"])
    obs = io.read_observations(m.paths["obs"])
    report = calibrate(obs, target, int(m.width), int(m.height), m.calib, m.meta)
    io.write_report(m.paths["out"], report)
    print(f"model {report.spec.kind}  rms {report.rms:.6f} px  inliers {report.inliers_used}  "
          f"trimmed {report.trimmed}  iterations {report.iterations}  converged {report.converged}")
    _print_params(report.spec, report.param_std)
    return EXIT_OK if report.converged else EXIT_FAILED


def cmd_simulate(m: RunManifest) -> int:
    m.require("truth", "target", "out")
    spec = io.read_spec(m.paths["truth"])
    target = io.read_target(m.paths["target"])
    out = m.paths["out"]
    out.mkdir(parents=True, exist_ok=True)
    poses = sample_poses(spec, target, m.sim)
    obs, truth = synthesize_observations(spec, target, poses, m.sim)
    io.write_observations(out / "observations.jsonl", obs)
    io.write_truth(out / "truth.json", truth, m.sim)
    print(f"{len(obs)} frames, {obs.n_corners} corners written to {out}")
    return EXIT_OK


def cmd_evaluate(m: RunManifest) -> int:
    m.require("report", "truth")
    report = io.read_report(m.paths["report"])
    truth = io.read_truth(m.paths["truth"]) if _is_truth_record(m.paths["truth"]) else None
    spec = truth.spec if truth is not None else io.read_spec(m.paths["truth"])
    score = score_run(report, spec)
    d = io.score_to_dict(score)
    if "out" in m.paths:
        io.write_json(m.paths["out"], d)
    print(f"failed {score.failed} ({score.failure_reason})  max focal error {score.focal_error_max:.6g} px  "
          f"rms {score.rms:.6g} px")
    for name, e in zip(score.param_names, score.param_errors):
        print(f"{name:>10} {e:>+16.8g}")
    return EXIT_FAILED if score.failed else EXIT_OK


def _is_truth_record(path: Path) -> bool:
    return "poses" in io.read_json(path)


def cmd_study(m: RunManifest) -> int:
    m.require("truth", "out")
    truth = io.read_spec(m.paths["truth"])
    target = io.read_target(m.paths["target"]) if "target" in m.paths else default_target()
    models = m.models or (truth.kind,)
    study = StudyConfig(truth, models, m.seeds, target, m.sim, m.calib, m.group or truth.kind,
                        m.init_focal_scale, dict(truth.meta))
    summary, results = run_study(study, m.jobs)
    out = m.paths["out"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary.to_csv())
    (out / "failures.tsv").write_text(summary.failure_table())
    with open(out / "scores.jsonl", "w") as fh:
        for r in results:
            for s in r.scores:
                fh.write(json.dumps(io.score_to_dict(s)) + "\n")
    io.write_json(out / "study.json", {
        "truth": truth.to_dict(),
        "target": target.to_dict(),
        "models": list(study.models),
        "seeds": list(study.seeds),
        "simulate": m.sim.to_dict(),
        "calibrate": m.calib.to_dict(),
        "init_focal_scale": m.init_focal_scale,
    })
    for g in summary.groups:
        print(f"{g.group:>12} {g.model:>12}  failures {g.failures}/{g.runs}")
    return EXIT_OK


def _add_calib_flags(p) -> None:
    p.add_argument("--loss", choices=["none", "huber", "cauchy"], type=str.lower)
    p.add_argument("--loss-scale", type=float)
    p.add_argument("--trim", type=float, help="trim threshold in pixels")
    p.add_argument("--trim-rounds", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)


def _add_sim_flags(p) -> None:
    p.add_argument("--frames", type=int)
    p.add_argument("--sigma", type=float, help="pixel noise per axis")
    p.add_argument("--distance", type=_pair, help="target distance range 'lo,hi' in meters")
    p.add_argument("--max-tilt", type=float, help="degrees")
    p.add_argument("--in-image", type=float, help="minimum fraction of target points in the image")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wacal", description="Wide-angle camera calibration and simulation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="calibrate from corner observations")
    p.add_argument("--model", required=False)
    p.add_argument("--target")
    p.add_argument("--obs")
    p.add_argument("--out")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--meta", help="model options as JSON, e.g. '{\"theta_max\": 1.69}'")
    p.add_argument("--config")
    _add_calib_flags(p)

    p = sub.add_parser("simulate", help="synthesize noisy corner observations")
    p.add_argument("--truth")
    p.add_argument("--target")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    _add_sim_flags(p)

    p = sub.add_parser("evaluate", help="score a calibration report against the truth")
    p.add_argument("--report")
    p.add_argument("--truth")
    p.add_argument("--out")

    p = sub.add_parser("study", help="simulate, calibrate and score over many seeds")
    p.add_argument("--truth")
    p.add_argument("--target")
    p.add_argument("--models", help="comma-separated model kinds")
    p.add_argument("--seeds", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--group")
    p.add_argument("--init-focal-scale", type=float)
    p.add_argument("--out")
    p.add_argument("--config")
    _add_calib_flags(p)
    _add_sim_flags(p)
    return parser


COMMANDS = {"calibrate": cmd_calibrate, "simulate": cmd_simulate, "evaluate": cmd_evaluate, "study": cmd_study}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = manifest_from_args(args)
        return COMMANDS[args.command](manifest)
    except (OSError, ValueError, KeyError, TypeError, ParameterError, SamplingError, CalibrationError) as exc:
        print(f"wacal {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
