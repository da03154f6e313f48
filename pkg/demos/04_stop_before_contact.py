"""
Stopping before touching a buried object
========================================

A disk is buried 13 cm ahead. Weak jamming keeps every force below the
15 N bar of a fixed-threshold stop rule, so that rule only reacts once the
probe hits the object. The forecaster notices the jamming-induced change in
the force pattern and stops while granules still separate probe and object.
"""

from pathlib import Path

from grains.calibration import calibrate
from grains.detector import ThresholdDetector
from grains.scenario import load_scenario
from grains.simulator import SimulatedMedium, run_episode

here = Path(__file__).resolve().parent
sc = load_scenario(here.parent / "scenarios" / "baseline-sand.cfg")

medium = SimulatedMedium(sc.world, sc.consts, sc.start, sc.end_direction)
cal = calibrate(sc.calibration, medium, seed=sc.calibration_seed)
print(f"calibrated: MV* {cal.mv_star}, T* {cal.t_star:.1f}, z_bar {cal.z_bar:.2f}")

spiral = sc.spiral_for(cal)
for seed in range(3):
    ours = run_episode(spiral, sc.start, sc.end, sc.world, sc.consts, sc.detector_for(cal), seed=seed)
    fixed = run_episode(spiral, sc.start, sc.end, sc.world, sc.consts, ThresholdDetector(15.0), seed=seed)
    print(
        f"seed {seed}: forecaster stops at sample {ours.outcome.stop_index}, "
        f"{ours.zeta * 100:.1f} cm from the object (collision: {ours.collision}); "
        f"15 N rule collision: {fixed.collision}"
    )
