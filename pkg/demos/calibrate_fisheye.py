"""Simulate a wide fisheye, calibrate it with several models and compare.

Run: python demos/calibrate_fisheye.py
"""

import numpy as np

from wacal.calibrate import CalibConfig, calibrate
from wacal.evaluate import score_run
from wacal.models import CameraSpec
from wacal.simulate import PoseSampler, SimConfig, sample_poses, synthesize_observations
from wacal.study import default_target

truth = CameraSpec("EUCM", [760.0, 758.0, 801.0, 598.0, 0.62, 1.1], 1600, 1200)
target = default_target()
sim = SimConfig(noise_sigma=0.7, frames=40, seed=3, pose_sampler=PoseSampler((0.2, 0.6), 70.0))
obs, record = synthesize_observations(truth, target, sample_poses(truth, target, sim), sim)
print(f"{len(obs)} frames, {sum(len(f) for f in obs)} corners")

for kind in ("EUCM", "DS", "KB8", "Mei"):
    report = calibrate(obs, target, truth.width, truth.height, CalibConfig(kind))
    line = f"{kind:5s} rms={report.rms:.3f} px  cond={report.condition_number:.2e}"
    if kind == truth.kind:
        err = score_run(report, truth).param_errors
        line += "  max|err|=" + np.array2string(np.abs(err).max(), precision=3)
    print(line)
