"""Command-line entry point: ingest, scan, detect, summarize, simulate.

Exit codes: 0 success (rejected rows allowed), 2 configuration or schema
error, 3 insufficient data range, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence
from urllib.parse import quote
from zoneinfo import ZoneInfo

from . import __version__, activity, chain, detect, ingest, synth, windows
from .config import ConfigError, Settings, load_settings
from .pipeline import data_range, prepare_sequence

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_RANGE = 3

MANIFEST = "manifest.json"
EVENTS_DIR = "events"
SERIES_DIR = "series"


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _config_error(message: str) -> CliError:
    return CliError(message, EXIT_CONFIG)


def _range_error(message: str) -> CliError:
    return CliError(message, EXIT_RANGE)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def household_filename(household: str) -> str:
    name = quote(household, safe="-_.")
    if name.startswith("."):
        name = "%2E" + name[1:]
    return name + ".csv"


@dataclass
class Output:
    """Collects every file of a run in memory, then writes them in one go."""

    command: str
    settings: Settings
    arguments: dict
    files: dict[str, bytes] = field(default_factory=dict)
    inputs: list[dict] = field(default_factory=list)
    data_range: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add(self, relpath: str, text: str) -> None:
        self.files[relpath] = text.encode("utf-8")

    def add_input(self, label: str, data: bytes) -> None:
        self.inputs.append({"name": label, "sha256": _sha256(data)})

    def manifest(self) -> bytes:
        body = {
            "tool": "kitchenwatch",
            "version": __version__,
            "command": self.command,
            "arguments": self.arguments,
            "config": self.settings.snapshot(),
            "inputs": self.inputs,
            "data_range": self.data_range,
            "outputs": {path: _sha256(data) for path, data in sorted(self.files.items())},
            **self.extra,
        }
        return (json.dumps(body, indent=2, sort_keys=True) + "\n").encode("utf-8")

    def commit(self, out: Path, protected: Sequence[Path] = ()) -> None:
        out = out.resolve()
        for path in protected:
            path = path.resolve()
            if out == path or path in out.parents or out in path.parents:
                raise _config_error(f"output directory {out} overlaps input {path}")
        stale: set[str] = set()
        if out.exists():
            if not out.is_dir():
                raise _config_error(f"{out} exists and is not a directory")
            old = out / MANIFEST
            if old.exists():
                try:
                    stale = set(json.loads(old.read_text(encoding="utf-8")).get("outputs", {}))
                except (OSError, ValueError):
                    raise _config_error(f"unreadable manifest in {out}") from None
            elif any(out.iterdir()):
                raise _config_error(f"refusing to write into non-empty directory {out} without a manifest")
        manifest = self.manifest()
        out.mkdir(parents=True, exist_ok=True)
        for relpath, data in sorted(self.files.items()):
            _atomic_write(out / relpath, data)
        for relpath in sorted(stale - set(self.files)):
            target = out / relpath
            if target.is_file():
                target.unlink()
        _atomic_write(out / MANIFEST, manifest)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _households(text: str | None) -> set[str] | None:
    if text is None:
        return None
    ids = {h.strip() for h in text.split(",") if h.strip()}
    if not ids:
        raise _config_error("--households needs at least one id")
    return ids


def _local_date_filter(events, tz: str, start: date | None, end: date | None):
    zone = ZoneInfo(tz)
    for event in events:
        day = event.timestamp.astimezone(zone).date()
        if (start is None or day >= start) and (end is None or day < end):
            yield event


def _event_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise CliError(f"no such input: {path}", EXIT_FAILURE)
    root = path / EVENTS_DIR if (path / EVENTS_DIR).is_dir() else path
    return sorted(root.glob("*.csv"))


def _read_store(store: Path, settings: Settings, output: Output, households: set[str] | None):
    """Parse and validate every household file of a store."""
    events_dir = store / EVENTS_DIR
    if not events_dir.is_dir():
        # an ingest of zero events leaves only the manifest behind
        if not (store / MANIFEST).is_file():
            raise _config_error(f"{store} is not an event store (no {EVENTS_DIR}/ directory)")
        return {}
    fmt = ingest.EventFormatConfig(settings.ingest.truncate_subseconds)
    logs: dict[str, ingest.ValidatedEventLog] = {}
    for path in sorted(events_dir.glob("*.csv")):
        data = path.read_bytes()
        try:
            parsed = ingest.parse_event_log(data.decode("utf-8"), fmt)
        except ingest.SchemaError as exc:
            raise _config_error(f"{path.name}: {exc}") from None
        if parsed.rejects:
            first = parsed.rejects[0]
            raise _config_error(f"{path.name} line {first.line}: {first.reason}")
        validated = ingest.validate_events(parsed.events, settings.ingest.gap_threshold)
        for household, log in validated.items():
            if households is not None and household not in households:
                continue
            if household in logs:
                raise _config_error(f"household {household} appears in more than one store file")
            output.add_input(f"{EVENTS_DIR}/{path.name}", data)
            logs[household] = log
    if households is not None:
        missing = sorted(households - set(logs))
        if missing:
            raise _config_error(f"households not in store: {', '.join(missing)}")
    return logs


def _span(logs, tz: str) -> dict:
    firsts = [log.events[0].timestamp for log in logs if log.events]
    lasts = [log.events[-1].timestamp for log in logs if log.events]
    if not firsts:
        return {}
    return {
        "first_event": ingest.format_timestamp(min(firsts)),
        "last_event": ingest.format_timestamp(max(lasts)),
        "timezone": tz,
    }


def _arguments(args: argparse.Namespace, *names: str) -> dict:
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if isinstance(value, date):
            value = value.isoformat()
        elif isinstance(value, Path):
            value = value.name
        out[name] = value
    return out


def cmd_ingest(args: argparse.Namespace, settings: Settings) -> Output:
    output = Output("ingest", settings, _arguments(args, "households", "date_from", "date_to"))
    wanted = _households(args.households)
    fmt = ingest.EventFormatConfig(settings.ingest.truncate_subseconds)
    events: list[ingest.SensorEvent] = []
    rejects: list[tuple[str, ingest.Reject]] = []
    files = [f for path in args.inputs for f in _event_files(Path(path))]
    if not files:
        raise CliError("no input CSV files found", EXIT_FAILURE)
    for path in files:
        data = path.read_bytes()
        output.add_input(path.name, data)
        try:
            parsed = ingest.parse_event_log(data.decode("utf-8"), fmt)
        except ingest.SchemaError as exc:
            raise _config_error(f"{path.name}: {exc}") from None
        except UnicodeDecodeError:
            raise _config_error(f"{path.name}: not UTF-8 text") from None
        rejects.extend((path.name, r) for r in parsed.rejects)
        events.extend(
            e
            for e in _local_date_filter(parsed.events, settings.ingest.timezone, args.date_from, args.date_to)
            if wanted is None or e.household_id in wanted
        )
    logs = ingest.validate_events(events, settings.ingest.gap_threshold)

    for household, log in logs.items():
        output.add(f"{EVENTS_DIR}/{household_filename(household)}", ingest.write_event_csv(log.events))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("source", *ingest.REJECT_COLUMNS))
    for source, reject in rejects:
        writer.writerow([source, reject.line, reject.reason])
    output.add("rejects.csv", buf.getvalue())

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("household_id", "gap_start", "gap_end"))
    for household, log in logs.items():
        for start, end in log.gaps:
            writer.writerow([household, ingest.format_timestamp(start), ingest.format_timestamp(end)])
    output.add("gaps.csv", buf.getvalue())

    output.data_range = _span(logs.values(), settings.ingest.timezone)
    output.extra["households"] = {
        h: {"events": len(log), "duplicates": log.duplicates, "gaps": len(log.gaps)}
        for h, log in logs.items()
    }
    output.extra["rejected_rows"] = len(rejects)
    return output


def cmd_scan(args: argparse.Namespace, settings: Settings) -> Output:
    output = Output("scan", settings, _arguments(args, "households", "date_from", "date_to"))
    store = Path(args.store)
    logs = _read_store(store, settings, output, _households(args.households))
    config = settings.windows
    stats = {}
    for household, log in logs.items():
        span = data_range(log, config.timezone)
        start = args.date_from or (span[0] if span else None)
        end = args.date_to or (span[1] if span else None)
        if start is None or end is None:
            raise _range_error(
                f"household {household} has no events; at least {config.warmup_days} days "
                "(baseline + current) are required"
            )
        try:
            seq, collapse = prepare_sequence(log, settings.ingest.max_open_duration, settings.mapping)
        except chain.MappingError as exc:
            raise _config_error(str(exc)) from None
        try:
            series = windows.sliding_scan(seq, config, start, end)
        except windows.InsufficientRangeError as exc:
            raise _range_error(f"household {household}: {exc}") from None
        output.add(f"{SERIES_DIR}/{household_filename(household)}", windows.export_series(series))
        stats[household] = {
            "unmatched_open": collapse.unmatched_open,
            "unmatched_close": collapse.unmatched_close,
            "start": start.isoformat(),
            "end": end.isoformat(),
        }
    output.data_range = _span(logs.values(), config.timezone)
    output.extra["households"] = stats
    return output


def _read_series_dir(path: Path, output: Output | None, households: set[str] | None, label: str):
    root = path / SERIES_DIR if (path / SERIES_DIR).is_dir() else path
    if not root.is_dir():
        raise _config_error(f"no series directory at {path}")
    out: dict[str, windows.DissimilaritySeries] = {}
    for file in sorted(root.glob("*.csv")):
        data = file.read_bytes()
        try:
            parsed = windows.parse_series(data.decode("utf-8"))
        except (ValueError, KeyError) as exc:
            raise _config_error(f"{file.name}: {exc}") from None
        for household, series in parsed.items():
            if households is not None and household not in households:
                continue
            if household in out:
                raise _config_error(f"household {household} appears in more than one series file")
            out[household] = series
            if output is not None:
                output.add_input(f"{label}/{file.name}", data)
    return out


def _clip(series: windows.DissimilaritySeries, start: date | None, end: date | None):
    points = [
        p
        for p in series.points
        if (start is None or p.step_date >= start) and (end is None or p.step_date < end)
    ]
    return windows.DissimilaritySeries(series.household_id, points)


def cmd_detect(args: argparse.Namespace, settings: Settings) -> Output:
    output = Output(
        "detect", settings, {**_arguments(args, "households", "date_from", "date_to"), "reference": args.reference is not None}
    )
    wanted = _households(args.households)
    all_series = _read_series_dir(Path(args.series), output, wanted, "series")
    reference = None
    if args.reference is not None:
        reference = _read_series_dir(Path(args.reference), output, wanted, "reference")
    config = settings.detect
    alerts: list[detect.Alert] = []
    threshold_rows = []
    first_dates, last_dates = [], []
    for household, series in all_series.items():
        series = _clip(series, args.date_from, args.date_to)
        dates = series.step_dates
        if reference is not None:
            if household not in reference:
                raise _config_error(f"no reference series for household {household}")
            calibration_source = reference[household]
            cal_start = cal_end = None
            scoring_start = None
        else:
            if len(dates) < settings.calibration_steps:
                raise _range_error(
                    f"household {household} has {len(dates)} step dates; at least "
                    f"{settings.calibration_steps} are required for calibration"
                )
            calibration_source = series
            cal_start = dates[0]
            cal_end = dates[settings.calibration_steps - 1] + timedelta(days=1)
            scoring_start = cal_end
        try:
            profile = detect.calibrate(calibration_source, cal_start, cal_end, config=config)
        except detect.CalibrationError as exc:
            raise _range_error(f"household {household}: {exc}") from None
        alerts.extend(detect.detect(series, profile, config, scoring_start))
        for period in windows.Period:
            t = profile.periods[period]
            threshold_rows.append(
                [
                    household,
                    period.label,
                    repr(t.center),
                    repr(t.spread),
                    repr(t.threshold),
                    t.n_points,
                    profile.start.isoformat(),
                    profile.end.isoformat(),
                ]
            )
        if dates:
            first_dates.append(dates[0])
            last_dates.append(dates[-1])
    output.add("alerts.csv", detect.export_alerts(alerts))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ("household_id", "period", "center", "spread", "threshold", "n_points", "calibration_start", "calibration_end")
    )
    writer.writerows(threshold_rows)
    output.add("thresholds.csv", buf.getvalue())
    if first_dates:
        output.data_range = {"first_step": min(first_dates).isoformat(), "last_step": max(last_dates).isoformat()}
    output.extra["alert_days"] = detect.alert_days(alerts)
    return output


def cmd_summarize(args: argparse.Namespace, settings: Settings) -> Output:
    output = Output("summarize", settings, _arguments(args, "households", "date_from", "date_to"))
    store = Path(args.store)
    logs = _read_store(store, settings, output, _households(args.households))
    tz = settings.ingest.timezone
    sensors = settings.activity.sensors
    periods = settings.covid_periods()
    daily: list[activity.ActivityRecord] = []
    six_hourly: list[activity.ActivityRecord] = []
    means = []
    for household, log in logs.items():
        if args.date_from or args.date_to:
            kept = tuple(_local_date_filter(log.events, tz, args.date_from, args.date_to))
            log = ingest.ValidatedEventLog(household, kept, log.gaps, log.duplicates)
        # a fridge visit counts once, not once per door event
        log, _ = ingest.collapse_fridge_events(log, settings.ingest.max_open_duration)
        occupancy = settings.occupancy.get(household)
        daily.extend(activity.daily_mean_activity(log, sensors, tz, occupancy))
        six_hourly.extend(activity.six_hourly_activity(log, sensors, tz, occupancy))
        for label, tod, value in activity.covid_period_means(
            log, sensors, tz, occupancy, settings.activity.mode, periods
        ):
            means.append((household, label, occupancy, tod, value))
    standardized: list[activity.ActivityRecord] = []
    if daily or six_hourly:
        try:
            standardized = activity.standardize_by_time_of_day(daily + six_hourly)
        except activity.StandardizationError as exc:
            raise _range_error(str(exc)) from None
    output.add("daily.csv", activity.export_lme_table(daily, periods))
    output.add("six_hourly.csv", activity.export_lme_table(six_hourly, periods))
    output.add("standardized.csv", activity.export_lme_table(standardized, periods))
    output.add("period_means.csv", activity.export_period_means(means))
    output.data_range = _span(logs.values(), tz)
    return output


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> Output:
    output = Output(
        "simulate", settings, _arguments(args, "households", "date_from", "date_to", "seed", "fridge_fault_rate")
    )
    if args.date_from is None or args.date_to is None:
        raise _config_error("simulate needs --from and --to")
    try:
        if args.profile is not None:
            data = Path(args.profile).read_bytes()
            output.add_input(Path(args.profile).name, data)
            profile = synth.HouseholdProfile.from_dict(json.loads(data))
        else:
            profile = synth.default_profile(timezone=settings.ingest.timezone)
        scenario = None
        if args.scenario is not None:
            data = Path(args.scenario).read_bytes()
            output.add_input(Path(args.scenario).name, data)
            scenario = synth.scenario_from_dict(json.loads(data), profile)
    except (ValueError, KeyError, TypeError) as exc:
        raise _config_error(f"bad profile or scenario: {exc}") from None

    seed = profile.seed if args.seed is None else args.seed
    households = sorted(_households(args.households) or {profile.household_id})
    for i, household in enumerate(households):
        member = synth.with_household(profile, household, seed + i)
        try:
            log = synth.generate(
                member, args.date_from, args.date_to, scenario, fridge_fault_rate=args.fridge_fault_rate
            )
        except synth.ScenarioError as exc:
            raise _config_error(str(exc)) from None
        if log.events:
            output.add(f"{EVENTS_DIR}/{household_filename(household)}", ingest.write_event_csv(log.events))
    truth = {
        "households": {h: seed + i for i, h in enumerate(households)},
        "scenario": None
        if scenario is None
        else {
            "archetype": scenario.archetype,
            "onsets": [d.isoformat() for d in scenario.onsets],
            "episodic_days": scenario.episodic_days,
        },
    }
    output.add("ground_truth.json", json.dumps(truth, indent=2, sort_keys=True) + "\n")
    output.data_range = {"start": args.date_from.isoformat(), "end": args.date_to.isoformat()}
    return output


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO 8601 date: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kitchenwatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="INI settings file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--households", help="comma-separated household ids")
        p.add_argument("--from", dest="date_from", type=_iso_date, help="first local date (inclusive)")
        p.add_argument("--to", dest="date_to", type=_iso_date, help="end local date (exclusive)")

    p = sub.add_parser("ingest", help="validate raw event CSVs into a store")
    p.add_argument("inputs", nargs="+", help="CSV files or directories of CSV files")
    common(p)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("scan", help="sliding-window dissimilarity series per household")
    p.add_argument("store", help="event store written by ingest or simulate")
    common(p)
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("detect", help="threshold series into classified alerts")
    p.add_argument("series", help="output directory of scan")
    p.add_argument("--reference", help="scan output whose series calibrate the thresholds")
    common(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("summarize", help="activity tables for mixed-model analysis")
    p.add_argument("store", help="event store written by ingest or simulate")
    common(p)
    p.set_defaults(handler=cmd_summarize)

    p = sub.add_parser("simulate", help="generate a synthetic event store")
    p.add_argument("--profile", help="household profile JSON (default: built-in profile)")
    p.add_argument("--scenario", help="change scenario JSON")
    p.add_argument("--seed", type=int, help="base seed; household i uses seed + i")
    p.add_argument("--fridge-fault-rate", type=float, default=0.0, help="probability a door close is lost")
    common(p)
    p.set_defaults(handler=cmd_simulate)
    return parser


def _protected(args: argparse.Namespace) -> list[Path]:
    paths = [Path(p) for p in getattr(args, "inputs", ())]
    for name in ("store", "series", "reference"):
        value = getattr(args, name, None)
        if value is not None:
            paths.append(Path(value))
    return paths


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args.config)
        if args.date_from and args.date_to and args.date_to <= args.date_from:
            raise _config_error("--to must be after --from")
        output = args.handler(args, settings)
        output.commit(args.out, _protected(args))
    except CliError as exc:
        print(f"kitchenwatch {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"kitchenwatch {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"kitchenwatch {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
