"""
Forecasting the force pattern of an empty medium
================================================

Without a buried object the drag on the probe repeats every revolution.
A Gaussian process with a periodic kernel learns one window of force
magnitudes and forecasts the next stretch; the z-scores of new samples
stay small.
"""

import numpy as np

from grains import gp
from grains.detector import preprocess
from grains.simulator import SimulatedMedium, material
from grains.trajectory import RobotConstants, SpiralParams, periodicity

consts = RobotConstants()
spiral = SpiralParams(mv=0.5)
T = periodicity(spiral, consts)

# raw (fx, fy) readings from 10 cm of object-free sand
medium = SimulatedMedium(material("sand"), consts)
fx, fy = medium.explore(spiral, 0.10, seed=7)
mags = preprocess(fx, fy, cutoff=5 / 62.5)[125:]  # skip the start-up spike

train, test = mags[:800], mags[800:1200]
model = gp.fit(
    gp.ForcePattern(0, train),
    gp.EssKernelParams(float(np.var(train)), 1.0, T),
    gp.WhiteKernelParams(0.1 * float(np.var(train))),
)
print(f"prior period {T:.1f} samples, fitted {model.ess.period:.1f}")
print(f"fitted noise std {np.sqrt(model.white.sigma_w2):.3f} N")

post = gp.predict(model, np.arange(800, 1200))
z = gp.z_scores(post, test)
print(f"forecast RMSE {np.sqrt(np.mean((post.mean - test) ** 2)):.3f} N")
print(f"z-scores: rms {np.sqrt(np.mean(z**2)):.2f}, max {z.max():.2f}")
