"""Streaming proximity detection from probe force measurements.

Raw (fx, fy) samples are zeroed against an initial quiescent segment,
low-pass filtered per axis and folded into a force magnitude. A GP fitted on
the most recent window forecasts the next samples; a measurement whose
z-score reaches the threshold stops the probe.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from . import gp
from .trajectory import Disk, Pose2D

__all__ = [
    "DetectionOutcome",
    "DetectorConfig",
    "LowPassFilter",
    "Measurement",
    "ProximityDetector",
    "ThresholdDetector",
    "TRACE_COLUMNS",
    "decide",
    "low_pass",
    "preprocess",
    "sensing_range",
    "write_trace",
    "zero_offset",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "x", "y", "fx", "fy", "f_mag_filtered", "mu_star", "sigma_star", "z", "triggered")


@dataclass(frozen=True)
class Measurement:
    t: int
    pos: Pose2D
    fx: float
    fy: float

    def __post_init__(self):
        if not (math.isfinite(self.fx) and math.isfinite(self.fy)):
            raise ValueError(f"non-finite force at t={self.t}")


@dataclass(frozen=True)
class DetectorConfig:
    """Window sizes, threshold and preprocessing for the online detector.

    ``period`` is the calibrated periodicity prior T*; ``filter_cutoff`` is a
    fraction of the sampling rate. ``refit_stride`` defaults to the horizon,
    i.e. the window advances block-wise by M* samples per fit.
    """

    window_m: int = 2000
    horizon_m_star: int = 1000
    z_threshold: float = 3.9
    period: float = 439.0
    filter_cutoff: float = 5.0 / 62.5
    refit_stride: int | None = None
    quiescent_samples: int = 50
    debounce: int = 1
    n_starts: int = 3
    demean: bool = True

    def __post_init__(self):
        if self.window_m < 2:
            raise ValueError("window_m must be at least 2")
        if self.horizon_m_star < 1:
            raise ValueError("horizon_m_star must be positive")
        if not self.z_threshold > 0:
            raise ValueError("z_threshold must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not 0 < self.filter_cutoff < 0.5:
            raise ValueError("filter_cutoff must lie in (0, 0.5)")
        if self.refit_stride is not None and self.refit_stride < 1:
            raise ValueError("refit_stride must be positive")
        if self.debounce < 1:
            raise ValueError("debounce must be >= 1")

    @property
    def stride(self) -> int:
        return self.refit_stride or self.horizon_m_star


@dataclass
class DetectionOutcome:
    triggered: bool = False
    stop_index: int | None = None
    stop_pos: Pose2D | None = None
    trigger_z: float | None = None
    trigger_force: float | None = None


# -- preprocessing ------------------------------------------------------------


def _butter(cutoff: float):
    if not 0 < cutoff < 0.5:
        raise ValueError(f"cutoff must lie in (0, 0.5) of the sampling rate, got {cutoff}")
    # scipy normalizes to Nyquist
    return signal.butter(1, 2.0 * cutoff)


def low_pass(raw, cutoff: float) -> np.ndarray:
    """Causal first-order Butterworth low-pass, zero initial state.

    ``cutoff`` is a fraction of the sampling rate, e.g. 5 Hz at 62.5 Hz is 0.08.
    """
    b, a = _butter(cutoff)
    return signal.lfilter(b, a, np.asarray(raw, dtype=float), axis=0)


class LowPassFilter:
    """Sample-by-sample version of :func:`low_pass` for any number of channels."""

    def __init__(self, cutoff: float, channels: int = 2):
        b, a = _butter(cutoff)
        self.b0, self.b1 = float(b[0]), float(b[1])
        self.a1 = float(a[1])
        self.state = np.zeros(channels)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.b0 * x + self.state
        self.state = self.b1 * x - self.a1 * y
        return y


def zero_offset(stream, n_quiescent: int = 50) -> np.ndarray:
    """Subtract the per-axis mean of the first ``n_quiescent`` samples."""
    stream = np.asarray(stream, dtype=float)
    if len(stream) < n_quiescent or n_quiescent < 1:
        raise ValueError(f"stream has {len(stream)} samples, quiescent segment needs {n_quiescent}")
    return stream - stream[:n_quiescent].mean(axis=0)


def preprocess(fx, fy, cutoff: float, n_quiescent: int = 50) -> np.ndarray:
    """Zero, filter each axis, then take magnitudes; quiescent samples are dropped."""
    forces = zero_offset(np.column_stack([fx, fy]), n_quiescent)
    filtered = low_pass(forces, cutoff)
    return np.hypot(filtered[n_quiescent:, 0], filtered[n_quiescent:, 1])


# -- decisions ----------------------------------------------------------------


def decide(z: Iterable[float], z_threshold: float) -> bool:
    """True iff any z-score reaches the threshold."""
    return bool(np.any(np.asarray(list(z), dtype=float) >= z_threshold))


def sensing_range(outcome: DetectionOutcome, objects: Sequence[Disk]) -> float:
    """Distance from the stop position to the nearest object surface."""
    if not outcome.triggered or outcome.stop_pos is None:
        raise ValueError("sensing range needs a triggered outcome")
    if not objects:
        raise ValueError("sensing range is undefined without objects")
    d = min(float(o.surface_distance(outcome.stop_pos.x, outcome.stop_pos.y)) for o in objects)
    return max(d, 0.0)


# -- streaming detectors --------------------------------------------------------


@dataclass
class TraceRow:
    t: int
    x: float
    y: float
    fx: float
    fy: float
    f_mag_filtered: float = math.nan
    mu_star: float = math.nan
    sigma_star: float = math.nan
    z: float = math.nan
    triggered: int = 0

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


class _StreamingBase:
    """Quiescent zeroing, per-axis filtering and trace bookkeeping.

    The first ``quiescent_samples`` measurements only estimate the sensor
    bias; once it is known they are filtered retroactively so the filter
    state is primed. Subclasses implement :meth:`_score`.
    """

    def __init__(self, filter_cutoff: float, quiescent_samples: int, record_trace: bool):
        self.filter = LowPassFilter(filter_cutoff)
        self.quiescent_samples = quiescent_samples
        self.record_trace = record_trace
        self.bias = np.zeros(2) if quiescent_samples == 0 else None
        self._quiet: list[tuple[Measurement, TraceRow]] = []
        self.outcome = DetectionOutcome()
        self.trace: list[TraceRow] = []
        self._last_t: int | None = None

    @property
    def done(self) -> bool:
        return self.outcome.triggered

    def push(self, m: Measurement) -> DetectionOutcome | None:
        """Consume one measurement. Returns the outcome on the triggering sample.

        Pushing after a trigger is a no-op.
        """
        if self.done:
            return None
        if self._last_t is not None and m.t <= self._last_t:
            raise ValueError(f"sample index {m.t} is not after {self._last_t}")
        self._last_t = m.t
        row = TraceRow(m.t, m.pos.x, m.pos.y, m.fx, m.fy)
        if self.record_trace:
            self.trace.append(row)
        if self.bias is None:
            self._quiet.append((m, row))
            if len(self._quiet) == self.quiescent_samples:
                raw = np.array([[q.fx, q.fy] for q, _ in self._quiet])
                self.bias = raw.mean(axis=0)
                for sample, (_, qrow) in zip(raw - self.bias, self._quiet):
                    f = self.filter(sample)
                    qrow.f_mag_filtered = float(np.hypot(f[0], f[1]))
                self._quiet.clear()
            return None
        f = self.filter(np.array([m.fx, m.fy]) - self.bias)
        row.f_mag_filtered = mag = float(np.hypot(f[0], f[1]))
        return self._score(m, row, mag)

    def _score(self, m: Measurement, row: TraceRow, mag: float) -> DetectionOutcome | None:
        raise NotImplementedError

    def _stop(self, m: Measurement, row: TraceRow, z: float | None, force: float) -> DetectionOutcome:
        row.triggered = 1
        self.outcome = DetectionOutcome(True, m.t, m.pos, z, force)
        return self.outcome


class ProximityDetector(_StreamingBase):
    """Online GP forecasting with a z-score stop rule.

    No decision is made until the first full window of ``window_m`` filtered
    magnitudes exists. Every ``stride`` samples the GP is refitted on the
    latest window (hyperparameters warm-started from the previous fit, period from T*) and
    the next ``horizon_m_star`` samples are scored against its forecast.
    """

    def __init__(self, config: DetectorConfig, record_trace: bool = True):
        super().__init__(config.filter_cutoff, config.quiescent_samples, record_trace)
        self.config = config
        self._t: list[int] = []
        self._f: list[float] = []
        self.model: gp.GPModel | None = None
        self._horizon_start = 0
        self._horizon: gp.Posterior | None = None
        self._since_fit = 0
        self._streak = 0
        self.n_fits = 0

    def _score(self, m, row, mag):
        cfg = self.config
        self._t.append(m.t)
        self._f.append(mag)
        if len(self._f) > cfg.window_m:
            del self._t[0], self._f[0]

        result = None
        k = m.t - self._horizon_start
        if self._horizon is not None and 0 <= k < len(self._horizon):
            mu = float(self._horizon.mean[k])
            sd = float(self._horizon.std[k])
            z = (mag - mu) / max(sd, gp.STD_FLOOR)
            row.mu_star, row.sigma_star, row.z = mu, sd, z
            self._streak = self._streak + 1 if z >= cfg.z_threshold else 0
            if self._streak >= cfg.debounce:
                result = self._stop(m, row, z, mag)
        else:
            self._streak = 0

        self._since_fit += 1
        if result is None and len(self._f) == cfg.window_m:
            if self.model is None or self._since_fit >= cfg.stride:
                self._refit()
        return result

    def _initial_params(self, window: np.ndarray, bounds: gp.FitBounds):
        if self.model is not None:
            ess, white = self.model.ess, self.model.white
        else:
            var = float(np.var(window)) or 1e-3
            ess = gp.EssKernelParams(var, 1.0, self.config.period)
            white = gp.WhiteKernelParams(0.1 * var)
        period_bounds = bounds.resolved(self.config.period)[2]
        ess = gp.EssKernelParams(
            float(np.clip(ess.sigma_p2, *bounds.sigma_p2)),
            float(np.clip(ess.length_scale, *bounds.length_scale)),
            # re-anchor at the prior so one bad window cannot pull later fits to a harmonic
            float(np.clip(self.config.period, *period_bounds)),
        )
        return ess, gp.WhiteKernelParams(float(np.clip(white.sigma_w2, *bounds.sigma_w2)))

    def _refit(self):
        cfg = self.config
        window = np.asarray(self._f)
        start = self._t[0]
        if self._t[-1] - start != cfg.window_m - 1:
            raise ValueError("window sample indices are not consecutive")
        bounds = gp.FitBounds()
        ess, white = self._initial_params(window, bounds)
        self.model = gp.fit(
            gp.ForcePattern(start, window),
            ess,
            white,
            bounds=bounds,
            n_starts=cfg.n_starts if self.model is None else 1,
            demean=cfg.demean,
        )
        self.n_fits += 1
        self._horizon_start = self._t[-1] + 1
        horizon = np.arange(self._horizon_start, self._horizon_start + cfg.horizon_m_star)
        self._horizon = gp.predict(self.model, horizon)
        self._since_fit = 0


class ThresholdDetector(_StreamingBase):
    """Baseline stop rule: filtered force magnitude at or above a fixed value."""

    def __init__(
        self,
        threshold: float = 15.0,
        filter_cutoff: float = 5.0 / 62.5,
        quiescent_samples: int = 50,
        record_trace: bool = True,
    ):
        super().__init__(filter_cutoff, quiescent_samples, record_trace)
        self.threshold = threshold

    def _score(self, m, row, mag):
        if mag >= self.threshold:
            return self._stop(m, row, None, mag)
        return None


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def write_trace(path, rows: Sequence[TraceRow], extra: dict[str, Sequence] | None = None) -> Path:
    """Write one CSV row per sample; empty cells mark values that do not exist."""
    path = Path(path)
    extra = extra or {}
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(TRACE_COLUMNS) + list(extra))
        for i, row in enumerate(rows):
            writer.writerow([_fmt(v) for v in row.values()] + [_fmt(col[i]) for col in extra.values()])
    return path
