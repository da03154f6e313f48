"""Haptic proximity sensing of objects buried in granular media.

A probe sweeps a spiral path through the medium. Its force readings are
forecast by a periodic Gaussian process fitted on a sliding window; a
z-score exceedance signals granular jamming ahead of an object, so the
probe stops before touching it.
"""

__version__ = "0.1.0"

from .calibration import CalibrationConfig, CalibrationResult, calibrate
from .detector import DetectionOutcome, DetectorConfig, Measurement, ProximityDetector, ThresholdDetector
from .gp import EssKernelParams, ForcePattern, GPModel, WhiteKernelParams, fit, predict, z_scores
from .scenario import Scenario, load_scenario, parse_scenario
from .simulator import MATERIAL_PRESETS, SimulatedMedium, WorldConfig, material, run_episode
from .trajectory import Disk, Pose2D, RobotConstants, SpiralParams, discretize_path, periodicity, spiral_point

__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "DetectionOutcome",
    "DetectorConfig",
    "Disk",
    "EssKernelParams",
    "ForcePattern",
    "GPModel",
    "MATERIAL_PRESETS",
    "Measurement",
    "Pose2D",
    "ProximityDetector",
    "RobotConstants",
    "Scenario",
    "SimulatedMedium",
    "SpiralParams",
    "ThresholdDetector",
    "WhiteKernelParams",
    "WorldConfig",
    "calibrate",
    "discretize_path",
    "fit",
    "load_scenario",
    "material",
    "parse_scenario",
    "periodicity",
    "predict",
    "run_episode",
    "spiral_point",
    "z_scores",
]
