"""Desk-scale stand-in for the probe/granular-media rig.

The force model is a parametric surrogate, not granular physics: a constant
drag, a sinusoidal modulation locked to the spiral phase, a static-friction
spike when motion starts, a power-law jamming ramp while a buried disk sits
inside the fan-shaped failure wedge ahead of the probe, and Gaussian noise.
The force opposes the instantaneous direction of motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .detector import (
    DetectionOutcome,
    DetectorConfig,
    Measurement,
    ProximityDetector,
    sensing_range,
    write_trace,
)
from .trajectory import Disk, Pose2D, RobotConstants, SpiralParams, discretize_path, heading, path_thetas

__all__ = [
    "EpisodeResult",
    "MATERIAL_PRESETS",
    "ProbeState",
    "SimulatedMedium",
    "WorldConfig",
    "force_at",
    "material",
    "run_episode",
    "wedge_contains",
]


@dataclass(frozen=True)
class WorldConfig:
    """Granular medium, buried objects and sensor imperfections.

    ``startup_peak`` (N) decays with time constant ``startup_tau`` (s) after
    motion begins; ``sensor_bias`` is a constant per-axis offset that the
    detector's zeroing step removes.
    """

    objects: tuple[Disk, ...] = ()
    f0: float = 8.0
    periodic_amp: float = 1.0
    noise_sigma: float = 0.3
    wedge_radius: float = 0.05
    wedge_half_angle: float = math.pi / 4
    jamming_gain: float = 4.0
    jamming_exponent: float = 2.0
    rng_seed: int = 0
    startup_peak: float = 5.0
    startup_tau: float = 0.5
    sensor_bias: tuple[float, float] = (0.0, 0.0)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")
        if not self.wedge_radius > 0:
            raise ValueError("wedge_radius must be positive")
        if not 0 < self.wedge_half_angle <= math.pi / 2:
            raise ValueError("wedge_half_angle must lie in (0, pi/2]")
        if not self.jamming_gain >= 0:
            raise ValueError("jamming_gain must be non-negative")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        if not self.startup_tau > 0:
            raise ValueError("startup_tau must be positive")

    def without_objects(self) -> "WorldConfig":
        return replace(self, objects=())


# Implementer-tuned surrogates. They differ in wedge reach, noise and how
# sharply jamming builds up, ordered so that the median stop distance is
# cat-litter >= sand > cassia > soybean.
MATERIAL_PRESETS: dict[str, dict] = {
    "sand": dict(wedge_radius=0.050, noise_sigma=0.30, jamming_exponent=2.0, jamming_gain=20.0),
    "cat-litter": dict(wedge_radius=0.055, noise_sigma=0.25, jamming_exponent=2.0, jamming_gain=20.0),
    "cassia": dict(wedge_radius=0.040, noise_sigma=0.30, jamming_exponent=2.5, jamming_gain=20.0),
    "soybean": dict(wedge_radius=0.030, noise_sigma=0.35, jamming_exponent=3.0, jamming_gain=20.0),
}


def material(name: str, **overrides) -> WorldConfig:
    try:
        preset = MATERIAL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown material preset {name!r}; choose from {sorted(MATERIAL_PRESETS)}") from None
    return WorldConfig(name=name, **{**preset, **overrides})


@dataclass(frozen=True)
class ProbeState:
    pos: Pose2D
    heading: float
    arc_position: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", _wrap(self.heading))


def _wrap(angle):
    """Map angles to (-pi, pi]."""
    out = np.mod(np.asarray(angle, dtype=float) + math.pi, 2 * math.pi) - math.pi
    out = np.where(out == -math.pi, math.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def _wedge(px, py, hdg, radius: float, half_angle: float, disk: Disk):
    """Vectorized sector/disk test; returns (hit, penetration depth)."""
    dx = disk.center.x - np.asarray(px, dtype=float)
    dy = disk.center.y - np.asarray(py, dtype=float)
    rho = np.hypot(dx, dy)
    r = disk.radius
    phi = np.abs(_wrap(np.arctan2(dy, dx) - hdg))
    # angular gap between the disk-center ray and the nearest sector edge
    delta = np.maximum(phi - half_angle, 0.0)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        beta = np.arcsin(np.clip(r / rho, 0.0, 1.0))
        nearest = rho * np.cos(delta) - np.sqrt(np.maximum(r * r - (rho * np.sin(delta)) ** 2, 0.0))
    inside = rho <= r
    nearest = np.where(inside, 0.0, nearest)
    hit = inside | ((delta <= beta) & (nearest <= radius))
    depth = np.where(hit, np.clip(radius - nearest, 0.0, radius), 0.0)
    return hit, depth


def wedge_contains(probe: ProbeState, cfg: WorldConfig, obj: Disk) -> tuple[bool, float]:
    """Whether ``obj`` intersects the failure wedge, and how deep (meters)."""
    hit, depth = _wedge(probe.pos.x, probe.pos.y, probe.heading, cfg.wedge_radius, cfg.wedge_half_angle, obj)
    return bool(hit), float(depth)


def _magnitude(cfg: WorldConfig, px, py, hdg, theta_phase, elapsed):
    mag = cfg.f0 + cfg.periodic_amp * np.sin(theta_phase)
    mag = mag + cfg.startup_peak * np.exp(-np.asarray(elapsed, dtype=float) / cfg.startup_tau)
    if cfg.jamming_gain > 0:
        for obj in cfg.objects:
            _, depth = _wedge(px, py, hdg, cfg.wedge_radius, cfg.wedge_half_angle, obj)
            mag = mag + cfg.jamming_gain * (depth / cfg.wedge_radius) ** cfg.jamming_exponent
    return mag


def force_at(
    probe: ProbeState,
    cfg: WorldConfig,
    theta_phase: float,
    rng: np.random.Generator | None = None,
    elapsed: float = math.inf,
) -> tuple[float, float]:
    """Force (fx, fy) on the probe, excluding sensor bias.

    ``elapsed`` is the time since motion started (for the static-friction
    spike). Noise is drawn from ``rng``; without one the force is noiseless.
    """
    mag = float(_magnitude(cfg, probe.pos.x, probe.pos.y, probe.heading, theta_phase, elapsed))
    if rng is not None and cfg.noise_sigma > 0:
        mag += cfg.noise_sigma * rng.standard_normal()
    return -mag * math.cos(probe.heading), -mag * math.sin(probe.heading)


# -- episodes -----------------------------------------------------------------


@dataclass(frozen=True)
class Kinematics:
    """Sampled probe motion along the discretized spiral, one row per sample."""

    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    theta: np.ndarray
    arc: np.ndarray
    elapsed: np.ndarray
    moving: np.ndarray
    polyline: np.ndarray


def sample_kinematics(
    spiral: SpiralParams,
    start: Pose2D,
    end: Pose2D,
    consts: RobotConstants,
    quiescent_samples: int = 50,
) -> Kinematics:
    """Constant arc-speed playback of the spiral at ``v_max * mv``, sampled at ``f_s``.

    The first ``quiescent_samples`` rows hold the probe still at the start.
    """
    _, theta_u = heading(start, end)
    distance = math.hypot(end.x - start.x, end.y - start.y)
    n_rev = max(1, math.ceil(distance / spiral.av - 1e-9))
    poly = discretize_path(spiral, start, end, n_rev)
    thetas = path_thetas(spiral.h, n_rev)
    seg = np.diff(poly, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    ds = consts.v_max * spiral.mv / consts.f_s
    n_motion = int(math.floor(cum[-1] / ds)) + 1
    s = np.arange(n_motion) * ds
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / seg_len[idx]
    x = poly[idx, 0] + frac * seg[idx, 0]
    y = poly[idx, 1] + frac * seg[idx, 1]
    theta = thetas[idx] + frac * (thetas[idx + 1] - thetas[idx])
    hdg = np.arctan2(seg[idx, 1], seg[idx, 0])

    q = quiescent_samples
    return Kinematics(
        x=np.concatenate((np.full(q, start.x), x)),
        y=np.concatenate((np.full(q, start.y), y)),
        heading=_wrap(np.concatenate((np.full(q, hdg[0]), hdg))),
        theta=np.concatenate((np.zeros(q), theta)),
        arc=np.concatenate((np.zeros(q), s)),
        elapsed=np.concatenate((np.full(q, np.nan), s / (consts.v_max * spiral.mv))),
        moving=np.concatenate((np.zeros(q, bool), np.ones(n_motion, bool))),
        polyline=poly,
    )


def synthesize_forces(kin: Kinematics, world: WorldConfig, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Raw sensor readings (fx, fy) for every sample, bias and noise included."""
    rng = np.random.default_rng(world.rng_seed if seed is None else seed)
    n = len(kin.x)
    noise = rng.standard_normal((n, 2)) * world.noise_sigma
    mag = _magnitude(world, kin.x, kin.y, kin.heading, kin.theta, np.where(kin.moving, kin.elapsed, np.inf))
    # at rest there is no drag, only sensor noise; in motion noise acts on the magnitude
    mag = np.where(kin.moving, mag + noise[:, 0], 0.0)
    fx = -mag * np.cos(kin.heading) + np.where(kin.moving, 0.0, noise[:, 0]) + world.sensor_bias[0]
    fy = -mag * np.sin(kin.heading) + np.where(kin.moving, 0.0, noise[:, 1]) + world.sensor_bias[1]
    return fx, fy


def nearest_surface(kin_x, kin_y, objects: Sequence[Disk]) -> np.ndarray:
    if not objects:
        return np.full(np.shape(kin_x), np.nan)
    return np.min([o.surface_distance(kin_x, kin_y) for o in objects], axis=0)


@dataclass
class EpisodeResult:
    outcome: DetectionOutcome
    collision: bool
    n_samples: int
    zeta: float | None
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    d_nearest: np.ndarray
    detector: object = field(repr=False, default=None)

    def write_trace(self, path):
        rows = self.detector.trace
        n = len(rows)
        collision = np.zeros(n, dtype=int)
        if self.collision and n:
            collision[-1] = 1
        return write_trace(path, rows, {"d_nearest_object": self.d_nearest[:n], "collision": collision})


def run_episode(
    spiral: SpiralParams,
    start: Pose2D,
    end: Pose2D,
    world: WorldConfig,
    consts: RobotConstants,
    detector: DetectorConfig | object,
    seed: int | None = None,
    record_trace: bool = True,
) -> EpisodeResult:
    """Drive the probe along the spiral, streaming each sample into ``detector``.

    ``detector`` is a :class:`DetectorConfig` (GP stop rule) or any object
    with a ``push(Measurement)`` method and ``done``/``outcome`` attributes,
    e.g. :class:`~grains.detector.ThresholdDetector`. The episode ends at the
    trigger, at first contact with an object (collision), or at path end.
    """
    if isinstance(detector, DetectorConfig):
        quiescent = detector.quiescent_samples
        detector = ProximityDetector(detector, record_trace=record_trace)
    else:
        quiescent = getattr(detector, "quiescent_samples", 50)
    kin = sample_kinematics(spiral, start, end, consts, quiescent)
    fx, fy = synthesize_forces(kin, world, seed)
    dist = nearest_surface(kin.x, kin.y, world.objects)
    contact = dist <= 0.0

    collision = False
    n = len(fx)
    for k in range(n):
        detector.push(Measurement(k, Pose2D(float(kin.x[k]), float(kin.y[k])), float(fx[k]), float(fy[k])))
        if contact[k]:
            collision = True
        if detector.done or collision:
            n = k + 1
            break

    outcome = detector.outcome
    zeta = None
    if outcome.triggered and world.objects:
        zeta = sensing_range(outcome, world.objects)
    return EpisodeResult(
        outcome=outcome,
        collision=collision,
        n_samples=n,
        zeta=zeta,
        t=np.arange(n),
        x=kin.x[:n],
        y=kin.y[:n],
        fx=fx[:n],
        fy=fy[:n],
        d_nearest=dist[:n],
        detector=detector,
    )


class SimulatedMedium:
    """Object-free force source for calibration runs.

    Calling it with spiral parameters explores ``distance`` meters forward
    and returns raw (fx, fy) arrays including the quiescent segment.
    """

    def __init__(self, world: WorldConfig, consts: RobotConstants, start=Pose2D(0.0, 0.0), direction=Pose2D(1.0, 0.0)):
        self.world = world.without_objects()
        self.consts = consts
        self.start = start
        self.direction = direction

    def explore(self, spiral: SpiralParams, distance: float, seed: int, quiescent_samples: int = 50):
        u, _ = heading(Pose2D(0.0, 0.0), self.direction)
        end = Pose2D(self.start.x + distance * u[0], self.start.y + distance * u[1])
        kin = sample_kinematics(spiral, self.start, end, self.consts, quiescent_samples)
        return synthesize_forces(kin, self.world, seed)
