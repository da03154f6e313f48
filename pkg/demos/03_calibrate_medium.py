"""
Calibrating a medium
====================

For each candidate speed the probe explores 20 cm of empty medium. The
speed whose force pattern is most predictable (smallest z-score RMSE) is
kept, along with its period and the largest z-score seen, which becomes the
stop threshold.

Takes a few seconds per medium.
"""

from pathlib import Path

from grains.calibration import calibrate, format_table
from grains.scenario import load_scenario
from grains.simulator import SimulatedMedium

here = Path(__file__).resolve().parent
scenario = load_scenario(here.parent / "scenarios" / "sand.cfg")
medium = SimulatedMedium(scenario.world, scenario.consts, scenario.start, scenario.end_direction)

result = calibrate(scenario.calibration, medium, seed=scenario.calibration_seed)
print(format_table(result))
