"""INI settings: one flat key/value section per pipeline stage."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from datetime import timedelta
from pathlib import Path

from . import activity, chain, ingest
from .detect import DetectConfig
from .windows import WindowConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class IngestSettings:
    timezone: str = "UTC"
    gap_threshold_hours: float = 24.0
    max_open_duration_minutes: float = 10.0
    truncate_subseconds: bool = False

    @property
    def gap_threshold(self) -> timedelta:
        return timedelta(hours=self.gap_threshold_hours)

    @property
    def max_open_duration(self) -> timedelta:
        return timedelta(minutes=self.max_open_duration_minutes)


@dataclass(frozen=True)
class ActivitySettings:
    sensors: tuple[str, ...] = tuple(sorted(ingest.SENSORS))
    mode: str = activity.SENSOR_MEANS
    period_table: str = ""


@dataclass(frozen=True)
class Settings:
    ingest: IngestSettings = IngestSettings()
    mapping: dict[str, chain.State] = field(default_factory=lambda: dict(chain.DEFAULT_MAPPING))
    windows: WindowConfig = WindowConfig()
    detect: DetectConfig = DetectConfig()
    calibration_steps: int = 28
    activity: ActivitySettings = ActivitySettings()
    occupancy: dict[str, str] = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "ingest": asdict(self.ingest),
            "mapping": {k: v.label for k, v in sorted(self.mapping.items())},
            "windows": asdict(self.windows),
            "detect": {**asdict(self.detect), "calibration_steps": self.calibration_steps},
            "activity": {**asdict(self.activity), "sensors": list(self.activity.sensors)},
            "occupancy": dict(sorted(self.occupancy.items())),
        }

    def covid_periods(self) -> tuple[activity.CovidPeriod, ...]:
        if not self.activity.period_table:
            return activity.COVID_PERIODS
        try:
            text = Path(self.activity.period_table).read_text(encoding="utf-8")
            return activity.load_period_table(text)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read period table: {exc}") from None


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def _read_section(parser, section: str, cls, defaults, rename=None):
    rename = rename or {}
    known = {f.name: f for f in fields(cls)}
    values = {}
    if not parser.has_section(section):
        return defaults, values
    for key, raw in parser.items(section):
        name = rename.get(key, key)
        if name not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        default = getattr(defaults, name)
        values[name] = _coerce(section, key, raw, type(default))
    return defaults, values


def load_settings(path: str | Path | None = None) -> Settings:
    if path is None:
        return Settings()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # household ids and sensor labels are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None

    known_sections = {"ingest", "mapping", "windows", "detect", "activity", "occupancy"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown config section [{section}]")

    try:
        _, ing = _read_section(parser, "ingest", IngestSettings, IngestSettings())
        ingest_settings = IngestSettings(**ing)

        _, win = _read_section(parser, "windows", WindowConfig, WindowConfig())
        windows = WindowConfig(**win, timezone=ingest_settings.timezone)

        det_values: dict = {}
        calibration_steps = 28
        if parser.has_section("detect"):
            det_parser = configparser.ConfigParser(interpolation=None)
            det_parser.optionxform = str
            det_parser.read_dict({"detect": {k: v for k, v in parser.items("detect") if k != "calibration_steps"}})
            _, det_values = _read_section(det_parser, "detect", DetectConfig, DetectConfig())
            if parser.has_option("detect", "calibration_steps"):
                calibration_steps = _coerce("detect", "calibration_steps", parser.get("detect", "calibration_steps"), int)
        for locked in ("current_days", "baseline_days", "min_support"):
            if locked in det_values:
                raise ConfigError(f"[detect] {locked} is taken from [windows]")
        detect = DetectConfig(
            **det_values,
            current_days=windows.current_days,
            baseline_days=windows.baseline_days,
            min_support=windows.min_support,
        )
        if calibration_steps < detect.min_calibration_steps:
            raise ConfigError(
                f"[detect] calibration_steps must be at least {detect.min_calibration_steps}"
            )

        mapping = dict(chain.DEFAULT_MAPPING)
        if parser.has_section("mapping"):
            for sensor, label in parser.items("mapping"):
                if sensor not in ingest.SENSORS:
                    raise ConfigError(f"[mapping] unknown sensor {sensor!r}")
                mapping[sensor] = chain.State.from_label(label)

        act = ActivitySettings()
        if parser.has_section("activity"):
            for key, raw in parser.items("activity"):
                if key == "sensors":
                    sensors = tuple(s.strip() for s in raw.split(",") if s.strip())
                    unknown = [s for s in sensors if s not in ingest.SENSORS]
                    if unknown or not sensors:
                        raise ConfigError(f"[activity] bad sensor list {raw!r}")
                    act = ActivitySettings(sensors, act.mode, act.period_table)
                elif key == "mode":
                    if raw.strip() not in (activity.SENSOR_MEANS, activity.DAILY_SUMS):
                        raise ConfigError(f"[activity] unknown mode {raw!r}")
                    act = ActivitySettings(act.sensors, raw.strip(), act.period_table)
                elif key == "period_table":
                    act = ActivitySettings(act.sensors, act.mode, raw.strip())
                else:
                    raise ConfigError(f"[activity] unknown key {key!r}")

        occupancy = {}
        if parser.has_section("occupancy"):
            for household, kind in parser.items("occupancy"):
                if kind.strip() not in activity.OCCUPANCY:
                    raise ConfigError(f"[occupancy] {household}: expected single or multiple")
                occupancy[household] = kind.strip()
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:  # ZoneInfoNotFoundError is a KeyError
        raise ConfigError(str(exc)) from None

    return Settings(
        ingest=ingest_settings,
        mapping=mapping,
        windows=windows,
        detect=detect,
        calibration_steps=calibration_steps,
        activity=act,
        occupancy=occupancy,
    )
