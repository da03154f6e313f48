"""Spiral search path: linear advance combined with circular vibration.

The probe circles a center that moves along the start->end direction. One
revolution advances the center by ``av`` meters; the circle radius is ``cr``.
``mv`` scales the robot's maximum end-effector speed and only affects timing,
never the path shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Disk",
    "Pose2D",
    "RobotConstants",
    "SpiralParams",
    "discretize_path",
    "heading",
    "path_thetas",
    "periodicity",
    "revolution_path_length",
    "spiral_point",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Disk:
    """Buried object footprint (top view)."""

    center: Pose2D
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")

    def surface_distance(self, x, y):
        """Signed distance from point(s) to the disk boundary (negative inside)."""
        return np.hypot(np.asarray(x) - self.center.x, np.asarray(y) - self.center.y) - self.radius


@dataclass(frozen=True)
class SpiralParams:
    """Circular radius, advance per revolution, speed ratio, points per revolution."""

    cr: float = 0.02
    av: float = 0.01
    mv: float = 0.2
    h: int = 1000

    def __post_init__(self):
        if not self.cr > 0:
            raise ValueError(f"cr must be positive, got {self.cr}")
        if not self.av > 0:
            raise ValueError(f"av must be positive, got {self.av}")
        if not 0 < self.mv <= 1:
            raise ValueError(f"mv must lie in (0, 1], got {self.mv}")
        if int(self.h) != self.h or self.h < 8:
            raise ValueError(f"h must be an integer >= 8, got {self.h}")

    def with_mv(self, mv: float) -> "SpiralParams":
        return SpiralParams(self.cr, self.av, mv, self.h)


@dataclass(frozen=True)
class RobotConstants:
    """Maximum end-effector speed (m/s) and force sampling rate (Hz)."""

    v_max: float = 0.08968
    f_s: float = 62.5

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not self.f_s > 0:
            raise ValueError(f"f_s must be positive, got {self.f_s}")


def heading(start: Pose2D, end: Pose2D) -> tuple[np.ndarray, float]:
    """Unit vector from ``start`` to ``end`` and its full-quadrant angle."""
    u = end.as_array() - start.as_array()
    norm = float(np.hypot(u[0], u[1]))
    if norm == 0.0:
        raise ValueError("start and end coincide; heading is undefined")
    u_hat = u / norm
    return u_hat, math.atan2(u[1], u[0])


def _points(params: SpiralParams, start: Pose2D, end: Pose2D, theta) -> np.ndarray:
    u_hat, theta_u = heading(start, end)
    theta = np.asarray(theta, dtype=float)
    advance = params.cr + theta / TWO_PI * params.av
    phase = theta_u + math.pi + theta
    x = start.x + advance * u_hat[0] + params.cr * np.cos(phase)
    y = start.y + advance * u_hat[1] + params.cr * np.sin(phase)
    return np.stack([x, y], axis=-1)


def spiral_point(params: SpiralParams, start: Pose2D, end: Pose2D, theta: float) -> Pose2D:
    """Probe position after rotating ``theta`` radians around the moving center.

    ``theta`` may exceed 2*pi; the center keeps advancing linearly.
    """
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta}")
    x, y = _points(params, start, end, theta)
    return Pose2D(float(x), float(y))


def path_thetas(h: int, n_rev: int) -> np.ndarray:
    i = np.arange(n_rev * h + 1)
    return i * (TWO_PI / h)


def discretize_path(params: SpiralParams, start: Pose2D, end: Pose2D, n_rev: int = 1) -> np.ndarray:
    """Polyline of ``n_rev * h + 1`` points, returned as an ``(N, 2)`` array."""
    if n_rev < 1:
        raise ValueError(f"n_rev must be >= 1, got {n_rev}")
    return _points(params, start, end, path_thetas(params.h, n_rev))


def revolution_path_length(params: SpiralParams) -> float:
    """Length of one revolution of the discretized spiral (sum of chord lengths)."""
    # shape depends only on cr and av, so any non-degenerate heading works
    pts = discretize_path(params, Pose2D(0.0, 0.0), Pose2D(1.0, 0.0), 1)
    seg = np.diff(pts, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def periodicity(params: SpiralParams, consts: RobotConstants) -> float:
    """Expected force-pattern period in samples for one revolution.

    Real valued; round only for reporting.
    """
    if params.mv <= 0:
        raise ValueError("mv must be positive")
    lp = revolution_path_length(params)
    return lp / (consts.v_max * params.mv) * consts.f_s
