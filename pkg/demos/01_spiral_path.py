"""
Spiral search path and its force periodicity
============================================

The probe circles a point that creeps forward, so the failure wedge in
front of it sweeps every direction once per revolution. One revolution
always takes the same number of samples, and that number is the period the
force forecaster expects.
"""

import numpy as np

from grains.trajectory import Pose2D, RobotConstants, SpiralParams, discretize_path, periodicity, revolution_path_length

# circle radius 2 cm, 1 cm of advance per revolution
spiral = SpiralParams(cr=0.02, av=0.01)
consts = RobotConstants()

# three revolutions heading diagonally; the polyline has h points per turn
path = discretize_path(spiral, Pose2D(0.0, 0.0), Pose2D(1.0, 1.0), n_rev=3)
print("polyline points:", path.shape[0])
print("start:", path[0], " after three turns:", np.round(path[-1], 6))

# path length of one turn, then the period in samples for each speed ratio
print(f"one revolution is {revolution_path_length(spiral) * 100:.4f} cm long")
for mv in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7):
    T = periodicity(spiral.with_mv(mv), consts)
    print(f"  MV {mv:.1f}: T = {T:7.2f} samples  (~{round(T)})")
