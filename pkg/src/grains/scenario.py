"""Flat ``key = value`` scenario files.

One file describes a medium, the buried objects, the probe path and the
detector/calibration settings. Lines starting with ``#`` are comments. An
optional ``preset`` key loads one of the material presets first; every other
key overrides it. Unknown and duplicated keys are rejected.

Example::

    preset = sand
    objects = 0.15 0.0 0.02
    start = 0 0
    end = 0.2 0
    window_m = 1000
    horizon_m_star = 500
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .calibration import CalibrationConfig, CalibrationResult
from .detector import DetectorConfig
from .simulator import MATERIAL_PRESETS, WorldConfig
from .trajectory import Disk, Pose2D, RobotConstants, SpiralParams

__all__ = ["KEYS", "Scenario", "ScenarioError", "load_scenario", "parse_scenario"]


class ScenarioError(ValueError):
    """Invalid scenario file; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _floats(n: int) -> Callable[[str], tuple[float, ...]]:
    def conv(text: str) -> tuple[float, ...]:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return vals

    return conv


def _float_list(text: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _objects(text: str) -> tuple[Disk, ...]:
    # "cx cy r; cx cy r; ..."; an empty value means no objects
    disks = []
    for chunk in text.split(";"):
        if chunk.strip():
            cx, cy, r = _floats(3)(chunk)
            disks.append(Disk(Pose2D(cx, cy), r))
    return tuple(disks)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _angle(text: str) -> float:
    # accepts radians, or degrees with a trailing "deg"
    t = text.strip().lower()
    return math.radians(float(t[:-3])) if t.endswith("deg") else float(t)


# key -> (group, converter, description)
KEYS: dict[str, tuple[str, Callable, str]] = {
    "preset": ("meta", str, f"material preset applied before other keys: {', '.join(sorted(MATERIAL_PRESETS))}"),
    "name": ("meta", str, "label used in summaries and reports (defaults to the preset or file stem)"),
    # world
    "objects": ("world", _objects, "buried disks as 'cx cy r' triples separated by ';' (m)"),
    "f0": ("world", float, "baseline drag magnitude (N)"),
    "periodic_amp": ("world", float, "per-revolution force modulation amplitude (N)"),
    "noise_sigma": ("world", float, "force noise standard deviation (N)"),
    "wedge_radius": ("world", float, "failure-wedge reach (m)"),
    "wedge_half_angle": ("world", _angle, "failure-wedge half angle (rad, or 'NNdeg')"),
    "jamming_gain": ("world", float, "force added at full wedge penetration (N)"),
    "jamming_exponent": ("world", float, "jamming ramp exponent"),
    "rng_seed": ("world", int, "base seed mixed into every episode seed"),
    "startup_peak": ("world", float, "extra static-friction force at motion start (N)"),
    "startup_tau": ("world", float, "decay time of the startup force (s)"),
    "sensor_bias": ("world", _floats(2), "constant per-axis sensor offset 'bx by' (N)"),
    # path
    "start": ("path", _floats(2), "exploration start 'x y' (m)"),
    "end": ("path", _floats(2), "exploration end 'x y' (m)"),
    "cr": ("spiral", float, "circular radius CR (m)"),
    "mv": ("spiral", float, "speed ratio for baseline runs; GP runs use the calibrated MV*"),
    "av": ("spiral", float, "advance per revolution AV (m)"),
    "h": ("spiral", int, "points per revolution"),
    "v_max": ("consts", float, "maximum end-effector speed (m/s)"),
    "f_s": ("consts", float, "force sampling rate (Hz)"),
    # detector
    "window_m": ("detector", int, "training window M (samples)"),
    "horizon_m_star": ("detector", int, "prediction horizon M* (samples)"),
    "refit_stride": ("detector", _optional_int, "samples between refits (default: M*)"),
    "filter_cutoff": ("detector", float, "low-pass cutoff as a fraction of f_s"),
    "quiescent_samples": ("detector", int, "initial at-rest samples used for zeroing"),
    "debounce": ("detector", int, "consecutive exceedances needed to stop (1 = single sample)"),
    "n_starts": ("detector", int, "optimizer starts for the first fit"),
    # calibration
    "mv_candidates": ("calibration", _float_list, "speed ratios to sweep"),
    "explore_distance": ("calibration", float, "object-free exploration distance per candidate (m)"),
    "settle_samples": ("calibration", int, "samples dropped after motion start"),
    "use_abs_z": ("calibration", _bool, "take max |z| instead of max z"),
    "z_margin": ("calibration", float, "multiplier applied to the calibrated threshold"),
    "calibration_seed": ("calibration", int, "seed of the calibration runs"),
    # baseline
    "baseline_threshold": ("baseline", float, "fixed force threshold of the baseline stop rule (N)"),
}


@dataclass(frozen=True)
class Scenario:
    """Everything needed to calibrate and run episodes in one medium."""

    name: str
    world: WorldConfig
    spiral: SpiralParams
    consts: RobotConstants
    start: Pose2D
    end: Pose2D
    detector: DetectorConfig
    calibration: CalibrationConfig
    calibration_seed: int = 0
    baseline_threshold: float = 15.0

    def detector_for(self, cal: CalibrationResult) -> DetectorConfig:
        return replace(self.detector, z_threshold=cal.threshold, period=cal.t_star)

    def spiral_for(self, cal: CalibrationResult) -> SpiralParams:
        return self.spiral.with_mv(cal.mv_star)

    @property
    def end_direction(self) -> Pose2D:
        return Pose2D(self.end.x - self.start.x, self.end.y - self.start.y)

    def episode_seed(self, seed: int) -> int:
        return seed + self.world.rng_seed


def _convert(key: str, raw: str):
    try:
        group, conv, _ = KEYS[key]
    except KeyError:
        raise ScenarioError(f"unknown key {key!r}", key) from None
    try:
        return group, conv(raw)
    except ValueError as exc:
        raise ScenarioError(f"bad value for {key!r}: {exc}", key) from None


def parse_scenario(text: str, default_name: str = "scenario") -> Scenario:
    """Build a :class:`Scenario` from scenario-file text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str  # keep keys case-sensitive so typos are caught
    try:
        cp.read_string("[scenario]\n" + text)
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError(f"duplicate key {exc.option!r}", exc.option) from None
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from None
    if len(cp.sections()) != 1:
        raise ScenarioError("section headers are not allowed in a scenario file")

    groups: dict[str, dict] = {g: {} for g in ("meta", "world", "path", "spiral", "consts", "detector", "calibration", "baseline")}
    for key, raw in cp["scenario"].items():
        group, value = _convert(key, raw)
        groups[group][key] = value

    meta = groups["meta"]
    preset = meta.get("preset")
    if preset is not None and preset not in MATERIAL_PRESETS:
        raise ScenarioError(f"unknown preset {preset!r}; choose from {sorted(MATERIAL_PRESETS)}", "preset")
    name = meta.get("name", preset or default_name)

    def build(cls, key_of_group: str, values: dict, **extra):
        try:
            return cls(**values, **extra)
        except ValueError as exc:
            bad = next((k for k in values if k in str(exc)), None)
            raise ScenarioError(f"invalid {key_of_group} settings: {exc}", bad) from None

    world_kw = dict(MATERIAL_PRESETS.get(preset, {}))
    world_kw.update(groups["world"])
    world = build(WorldConfig, "world", world_kw, name=name)
    spiral = build(SpiralParams, "spiral", groups["spiral"])
    consts = build(RobotConstants, "robot", groups["consts"])

    path = groups["path"]
    start = Pose2D(*path.get("start", (0.0, 0.0)))
    end = Pose2D(*path.get("end", (0.2, 0.0)))
    if start == end:
        raise ScenarioError("start and end coincide", "end")

    det = groups["detector"]
    detector = build(DetectorConfig, "detector", det)
    cal_kw = dict(groups["calibration"])
    cal_seed = cal_kw.pop("calibration_seed", 0)
    shared = {k: det[k] for k in ("window_m", "horizon_m_star", "filter_cutoff", "quiescent_samples") if k in det}
    calibration = build(CalibrationConfig, "calibration", cal_kw, spiral=spiral, consts=consts, **shared)

    threshold = groups["baseline"].get("baseline_threshold", 15.0)
    if not threshold > 0:
        raise ScenarioError("baseline_threshold must be positive", "baseline_threshold")
    return Scenario(name, world, spiral, consts, start, end, detector, calibration, cal_seed, threshold)


def load_scenario(path, overrides: dict[str, str] | None = None) -> Scenario:
    """Read a scenario file; ``overrides`` replace (or add) raw key values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror or exc}") from None
    if overrides:
        for key in overrides:
            if key not in KEYS:
                raise ScenarioError(f"unknown key {key!r}", key)
        kept = [ln for ln in text.splitlines() if ln.split("=", 1)[0].strip() not in overrides]
        text = "\n".join(kept + [f"{k} = {v}" for k, v in overrides.items()])
    return parse_scenario(text, default_name=path.stem)


def _defaults_doc() -> str:
    lines = []
    for key, (group, _, doc) in KEYS.items():
        lines.append(f"{key:<20} [{group}] {doc}")
    return "\n".join(lines)


KEYS_HELP = _defaults_doc()
