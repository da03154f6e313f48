"""Per-medium selection of speed ratio, periodicity prior and z-score threshold.

For every candidate speed ratio the probe explores an object-free stretch of
the medium. The filtered magnitude stream is cut into consecutive windows; a
GP with the candidate's periodicity (frozen) is fitted on window k and scores
window k+1. The candidate with the smallest z-score RMSE wins, and the
largest z-score seen at that candidate becomes the stop threshold.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import gp
from .detector import preprocess
from .trajectory import RobotConstants, SpiralParams, periodicity

__all__ = [
    "CalibrationConfig",
    "CalibrationError",
    "CalibrationResult",
    "CandidateStats",
    "calibrate",
    "format_table",
    "read_calibration",
    "rmse_of_zscores",
    "score_candidate",
    "write_calibration",
]

log = logging.getLogger(__name__)

DEFAULT_MV_CANDIDATES = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


class CalibrationError(RuntimeError):
    pass


class ForceSource(Protocol):
    def explore(self, spiral: SpiralParams, distance: float, seed: int, quiescent_samples: int = 50): ...


@dataclass(frozen=True)
class CalibrationConfig:
    mv_candidates: Sequence[float] = DEFAULT_MV_CANDIDATES
    spiral: SpiralParams = SpiralParams()
    explore_distance: float = 0.20
    consts: RobotConstants = RobotConstants()
    window_m: int = 2000
    horizon_m_star: int = 1000
    filter_cutoff: float = 5.0 / 62.5
    quiescent_samples: int = 50
    settle_samples: int = 125
    use_abs_z: bool = False
    z_margin: float = 1.0
    n_starts: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mv_candidates", tuple(float(m) for m in self.mv_candidates))
        if not self.mv_candidates:
            raise ValueError("mv_candidates must not be empty")
        for mv in self.mv_candidates:
            if not 0 < mv <= 1:
                raise ValueError(f"mv_candidates entry {mv} outside (0, 1]")
        if not self.explore_distance > 0:
            raise ValueError("explore_distance must be positive")
        if self.settle_samples < 0:
            raise ValueError("settle_samples must be non-negative")
        if not self.z_margin > 0:
            raise ValueError("z_margin must be positive")


@dataclass(frozen=True)
class CandidateStats:
    mv: float
    period: float
    rmse: float
    max_z: float
    n_windows: int
    n_scores: int


@dataclass(frozen=True)
class CalibrationResult:
    mv_star: float
    t_star: float
    z_bar: float
    per_candidate: tuple[CandidateStats, ...]
    z_margin: float = 1.0
    excluded: tuple[float, ...] = field(default=())

    @property
    def threshold(self) -> float:
        """Stop threshold handed to the detector (``z_bar`` times the margin)."""
        return self.z_bar * self.z_margin


def rmse_of_zscores(z) -> float:
    z = np.asarray(z, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("no z-scores to summarize")
    return float(np.sqrt(np.mean(z * z)))


def _candidate_seed(seed: int, mv: float) -> int:
    # independent of the candidate's position in the list
    return int(np.random.SeedSequence([seed, int(round(mv * 1e6))]).generate_state(1)[0])


def score_candidate(magnitudes: np.ndarray, period: float, config: CalibrationConfig, first_index: int = 0) -> np.ndarray:
    """Z-scores of every window after the first, each predicted from its predecessor."""
    M = config.window_m
    horizon = min(config.horizon_m_star, M)
    n_windows = len(magnitudes) // M
    if n_windows < 2:
        return np.empty(0)
    first = magnitudes[:M]
    var = float(np.var(first)) or 1e-3
    bounds = gp.FitBounds()
    ess0 = gp.EssKernelParams(float(np.clip(var, *bounds.sigma_p2)), 1.0, period)
    white0 = gp.WhiteKernelParams(float(np.clip(0.1 * var, *bounds.sigma_w2)))
    bounds = gp.FitBounds(period=(period, period))
    scores = []
    for k in range(n_windows - 1):
        train = magnitudes[k * M : (k + 1) * M]
        model = gp.fit(gp.ForcePattern(first_index + k * M, train), ess0, white0, bounds=bounds, n_starts=config.n_starts)
        test_idx = first_index + (k + 1) * M + np.arange(horizon)
        observed = magnitudes[(k + 1) * M : (k + 1) * M + horizon]
        scores.append(gp.z_scores(gp.predict(model, test_idx), observed))
    return np.concatenate(scores)


def calibrate(config: CalibrationConfig, medium: ForceSource, seed: int = 0) -> CalibrationResult:
    """Sweep the MV candidates over object-free runs and pick {MV*, T*, z_bar}.

    Ties in RMSE go to the smallest MV. Candidates whose run yields fewer
    than two windows are skipped with a warning.
    """
    stats: list[CandidateStats] = []
    maxima: dict[float, float] = {}
    excluded = []
    for mv in config.mv_candidates:
        spiral = config.spiral.with_mv(mv)
        period = periodicity(spiral, config.consts)
        fx, fy = medium.explore(spiral, config.explore_distance, _candidate_seed(seed, mv), config.quiescent_samples)
        # the static-friction transient at motion start is not part of the pattern
        mags = preprocess(fx, fy, config.filter_cutoff, config.quiescent_samples)[config.settle_samples :]
        z = score_candidate(mags, period, config, first_index=config.quiescent_samples + config.settle_samples)
        if z.size == 0:
            log.warning("MV=%.3g gives %d samples, fewer than two windows of %d; excluded", mv, len(mags), config.window_m)
            excluded.append(mv)
            continue
        peak = float(np.max(np.abs(z) if config.use_abs_z else z))
        maxima[mv] = peak
        stats.append(CandidateStats(mv, period, rmse_of_zscores(z), max(peak, 0.0), len(mags) // config.window_m, z.size))
    if not stats:
        raise CalibrationError("no MV candidate produced at least two windows; increase explore_distance")
    best = min(stats, key=lambda s: (s.rmse, s.mv))
    return CalibrationResult(
        mv_star=best.mv,
        t_star=best.period,
        z_bar=best.max_z,
        per_candidate=tuple(stats),
        z_margin=config.z_margin,
        excluded=tuple(excluded),
    )


CSV_COLUMNS = ("mv", "T", "rmse", "max_z", "selected")


def write_calibration(path, result: CalibrationResult) -> Path:
    """CSV report, one row per candidate; ``selected`` flags the minimum-RMSE row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in result.per_candidate:
            w.writerow([repr(s.mv), repr(s.period), repr(s.rmse), repr(s.max_z), int(s.mv == result.mv_star)])
    return path


def read_calibration(path) -> CalibrationResult:
    rows = list(csv.DictReader(Path(path).open()))
    if not rows:
        raise CalibrationError(f"{path} holds no candidates")
    stats = tuple(CandidateStats(float(r["mv"]), float(r["T"]), float(r["rmse"]), float(r["max_z"]), 0, 0) for r in rows)
    chosen = [s for s, r in zip(stats, rows) if r["selected"] == "1"]
    if len(chosen) != 1:
        raise CalibrationError(f"{path} must flag exactly one selected row")
    best = chosen[0]
    return CalibrationResult(best.mv, best.period, best.max_z, stats)


def format_table(result: CalibrationResult) -> str:
    """Plain-text table with the minimum-RMSE column marked by ``*``."""
    head = ["MV / T"] + [f"{s.mv:g} / {round(s.period)}" for s in result.per_candidate]
    rmse = ["RMSE"] + [f"{s.rmse:.4f}" + ("*" if s.mv == result.mv_star else "") for s in result.per_candidate]
    peak = ["max(z)"] + [f"{s.max_z:.1f}" for s in result.per_candidate]
    widths = [max(len(r[i]) for r in (head, rmse, peak)) for i in range(len(head))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in (head, rmse, peak)]
    lines.append(f"D = {{MV*: {result.mv_star:g}, T*: {round(result.t_star)}, z_bar: {result.z_bar:.2f}}}")
    return "\n".join(lines)
