"""Alert log and outage report parsing, time-window binning, and matrix filters."""

from __future__ import annotations

import json
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SEVERITIES = ("info", "warning", "critical")
DEFAULT_PRE_WINDOW = timedelta(hours=1)


class AlertFormatError(ValueError):
    """Raised when an alert or outage record cannot be parsed."""


def parse_timestamp(value: Any) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime (second resolution)."""
    if isinstance(value, datetime):
        ts = value
    elif isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    else:
        raise TypeError(f"expected RFC 3339 string, got {type(value).__name__}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Alert:
    alert_id: str
    title: str
    service: str
    severity: str
    fired_at: datetime
    description: str | None = None

    def to_dict(self) -> dict:
        d = {
            "alert_id": self.alert_id,
            "title": self.title,
            "service": self.service,
            "severity": self.severity,
            "fired_at": format_timestamp(self.fired_at),
        }
        if self.description is not None:
            d["description"] = self.description
        return d


@dataclass(frozen=True)
class OutageReport:
    outage_id: str
    start_time: datetime
    resolution_time: datetime
    symptom_text: str
    root_cause_text: str
    remediation_text: str
    affected_services: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.outage_id:
            raise AlertFormatError("outage_id must be non-empty")
        if self.start_time >= self.resolution_time:
            raise AlertFormatError(f"outage {self.outage_id}: start_time must precede resolution_time")
        for name in ("symptom_text", "root_cause_text", "remediation_text"):
            if not getattr(self, name).strip():
                raise AlertFormatError(f"outage {self.outage_id}: {name} is empty")

    def to_dict(self) -> dict:
        d = {
            "outage_id": self.outage_id,
            "start_time": format_timestamp(self.start_time),
            "resolution_time": format_timestamp(self.resolution_time),
            "symptom": self.symptom_text,
            "root_cause": self.root_cause_text,
            "remediation": self.remediation_text,
        }
        if self.affected_services:
            d["affected_services"] = list(self.affected_services)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OutageReport":
        try:
            return cls(
                outage_id=str(d["outage_id"]),
                start_time=parse_timestamp(d["start_time"]),
                resolution_time=parse_timestamp(d["resolution_time"]),
                symptom_text=str(d["symptom"]),
                root_cause_text=str(d["root_cause"]),
                remediation_text=str(d["remediation"]),
                affected_services=tuple(d.get("affected_services") or ()),
            )
        except KeyError as exc:
            raise AlertFormatError(f"outage record missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, AlertFormatError):
                raise
            raise AlertFormatError(f"outage record {d.get('outage_id')!r}: {exc}") from None


@dataclass
class AlertLog:
    """Chronologically sorted sequence of alert firings."""

    alerts: list[Alert] = field(default_factory=list)

    def __post_init__(self):
        self.alerts = sorted(self.alerts, key=lambda a: (a.fired_at, a.alert_id))
        self._times = [a.fired_at for a in self.alerts]

    def __len__(self) -> int:
        return len(self.alerts)

    def __iter__(self):
        return iter(self.alerts)

    def between(self, start: datetime, end: datetime) -> list[Alert]:
        """Firings with start <= fired_at <= end."""
        lo = bisect_left(self._times, start)
        hi = bisect_right(self._times, end)
        return self.alerts[lo:hi]

    def without_interval(self, start: datetime, end: datetime) -> "AlertLog":
        lo = bisect_left(self._times, start)
        hi = bisect_right(self._times, end)
        return AlertLog(self.alerts[:lo] + self.alerts[hi:])

    def titles(self) -> dict[str, str]:
        """Latest title seen for each alert_id."""
        out: dict[str, str] = {}
        for a in self.alerts:
            out[a.alert_id] = a.title
        return dict(sorted(out.items()))

    def span(self) -> tuple[datetime, datetime]:
        if not self.alerts:
            raise ValueError("empty alert log has no span")
        return self._times[0], self._times[-1]


def _parse_alert(record: dict, index: int) -> Alert:
    if not isinstance(record, dict):
        raise AlertFormatError(f"record {index}: expected an object, got {type(record).__name__}")
    for key in ("alert_id", "fired_at"):
        if record.get(key) in (None, ""):
            raise AlertFormatError(f"record {index}: missing required field {key!r}")
    severity = str(record.get("severity", "info")).lower()
    if severity not in SEVERITIES:
        raise AlertFormatError(f"record {index}: unknown severity {severity!r}")
    try:
        fired_at = parse_timestamp(record["fired_at"])
    except (TypeError, ValueError) as exc:
        raise AlertFormatError(f"record {index}: bad fired_at {record['fired_at']!r} ({exc})") from None
    return Alert(
        alert_id=str(record["alert_id"]),
        title=str(record.get("title") or record["alert_id"]),
        service=str(record.get("service", "")),
        severity=severity,
        fired_at=fired_at,
        description=record.get("description"),
    )


def parse_alerts(records: Iterable[dict | str]) -> AlertLog:
    """Parse raw alert records (dicts or JSON lines) into a sorted AlertLog.

    Record indices in error messages are 1-based, so for a JSONL file they
    are line numbers.
    """
    alerts = []
    for i, rec in enumerate(records, start=1):
        if isinstance(rec, str):
            if not rec.strip():
                continue
            try:
                rec = json.loads(rec)
            except json.JSONDecodeError as exc:
                raise AlertFormatError(f"record {i}: invalid JSON ({exc.msg})") from None
        alerts.append(_parse_alert(rec, i))
    if not alerts:
        raise AlertFormatError("no alert records in input")
    return AlertLog(alerts)


def read_alert_log(path: str | Path) -> AlertLog:
    with open(path, encoding="utf-8") as fh:
        return parse_alerts(fh)


def write_alert_log(log: AlertLog | Sequence[Alert], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in log:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")


def read_outage_reports(path: str | Path) -> list[OutageReport]:
    """Load reports from a directory of per-outage JSON files, a JSON array, or JSONL."""
    path = Path(path)
    docs: list[dict] = []
    if path.is_dir():
        for p in sorted(path.glob("*.json")):
            docs.append(json.loads(p.read_text(encoding="utf-8")))
    else:
        text = path.read_text(encoding="utf-8")
        stripped = text.lstrip()
        if stripped.startswith("["):
            docs = json.loads(text)
        else:
            docs = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not docs:
        raise AlertFormatError(f"no outage reports found at {path}")
    reports = [OutageReport.from_dict(d) for d in docs]
    ids = [r.outage_id for r in reports]
    if len(set(ids)) != len(ids):
        raise AlertFormatError("duplicate outage_id in reports")
    return sorted(reports, key=lambda r: r.outage_id)


def write_outage_reports(reports: Sequence[OutageReport], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r in reports:
        (directory / f"{r.outage_id}.json").write_text(
            json.dumps(r.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


@dataclass
class IndicatorMatrix:
    """Binary (time window x alert) occurrence matrix."""

    window_start_times: list[datetime]
    alert_ids: list[str]
    cells: np.ndarray
    window_minutes: float

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 2:
            self.cells = self.cells.reshape(len(self.window_start_times), len(self.alert_ids))
        if self.cells.shape != (len(self.window_start_times), len(self.alert_ids)):
            raise ValueError("cells shape does not match rows x columns")
        if len(set(self.alert_ids)) != len(self.alert_ids):
            raise ValueError("duplicate alert_ids in indicator matrix")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def column(self, alert_id: str) -> np.ndarray:
        return self.cells[:, self.alert_ids.index(alert_id)]

    def drop_rows_between(self, start: datetime, end: datetime) -> "IndicatorMatrix":
        """Remove every window that overlaps [start, end]."""
        width = timedelta(minutes=self.window_minutes)
        keep = [i for i, w in enumerate(self.window_start_times) if w + width <= start or w > end]
        return IndicatorMatrix(
            [self.window_start_times[i] for i in keep], list(self.alert_ids), self.cells[keep], self.window_minutes
        )


def floor_to_window(ts: datetime, origin: datetime, t_minutes: float) -> int:
    """Index of the half-open window [origin + i*t, origin + (i+1)*t) containing ts."""
    return math.floor((ts - origin).total_seconds() / (t_minutes * 60.0))


def build_indicator_matrix(
    log: AlertLog, t: float = 15, period: tuple[datetime, datetime] | None = None
) -> IndicatorMatrix:
    """Bin alert firings into t-minute windows covering ``period``.

    ``period`` defaults to the log span. Firings outside the period are ignored.
    """
    if t <= 0:
        raise ValueError("window duration t must be positive")
    if period is None:
        if len(log) == 0:
            raise ValueError("period is required for an empty log")
        first, last = log.span()
        period = (first, last + timedelta(seconds=1))
    start, end = parse_timestamp(period[0]), parse_timestamp(period[1])
    total = (end - start).total_seconds()
    if total < t * 60:
        raise ValueError(f"period ({total / 60:.1f} min) is shorter than the window duration t={t}")
    n_rows = math.ceil(total / (t * 60))
    windows = [start + timedelta(minutes=t * i) for i in range(n_rows)]

    if len(log) == 0:
        logger.warning("empty alert log; returning an all-zero indicator matrix")
        return IndicatorMatrix(windows, [], np.zeros((n_rows, 0), dtype=np.uint8), t)

    alert_ids = sorted({a.alert_id for a in log})
    col = {a: j for j, a in enumerate(alert_ids)}
    cells = np.zeros((n_rows, len(alert_ids)), dtype=np.uint8)
    outside = 0
    for a in log:
        if a.fired_at < start or a.fired_at >= end:
            outside += 1
            continue
        cells[floor_to_window(a.fired_at, start, t), col[a.alert_id]] = 1
    if outside:
        logger.warning("%d alert firings fall outside the matrix period and were ignored", outside)
    return IndicatorMatrix(windows, alert_ids, cells, t)


def alerts_in_outage_window(
    log: AlertLog, outage: OutageReport, pre_window: timedelta = DEFAULT_PRE_WINDOW
) -> set[str]:
    """Alert ids with a firing in [start - pre_window, resolution_time]."""
    return {a.alert_id for a in log.between(outage.start_time - pre_window, outage.resolution_time)}


def filter_columns(
    m: IndicatorMatrix,
    outages: Sequence[OutageReport],
    min_fires: int = 10,
    log: AlertLog | None = None,
    pre_window: timedelta = DEFAULT_PRE_WINDOW,
) -> IndicatorMatrix:
    """Drop rare alerts that never fired around any outage.

    A column goes when the alert fired fewer than ``min_fires`` times and
    never in any outage's [start - pre_window, resolution] interval. With
    ``log`` given, both checks use exact firings; otherwise firing windows
    stand in for firings and outage overlap is judged per window.
    """
    if min_fires < 1:
        raise ValueError("min_fires must be >= 1")
    protected: set[str] = set()
    if log is not None:
        counts: dict[str, int] = {}
        for a in log:
            counts[a.alert_id] = counts.get(a.alert_id, 0) + 1
        totals = np.array([counts.get(a, 0) for a in m.alert_ids])
        for o in outages:
            protected |= alerts_in_outage_window(log, o, pre_window)
    else:
        totals = m.cells.sum(axis=0)
        width = timedelta(minutes=m.window_minutes)
        for o in outages:
            lo, hi = o.start_time - pre_window, o.resolution_time
            rows = [i for i, w in enumerate(m.window_start_times) if w <= hi and w + width > lo]
            if rows:
                hit = m.cells[rows].any(axis=0)
                protected |= {a for a, h in zip(m.alert_ids, hit) if h}
    keep = [j for j, a in enumerate(m.alert_ids) if totals[j] >= min_fires or a in protected]
    return IndicatorMatrix(
        list(m.window_start_times), [m.alert_ids[j] for j in keep], m.cells[:, keep], m.window_minutes
    )


def filter_rows(m: IndicatorMatrix, drop_fraction: float = 0.95, seed: int = 0) -> IndicatorMatrix:
    """Randomly drop ``drop_fraction`` of the all-zero rows; keep every row with a firing."""
    if not 0 <= drop_fraction < 1:
        raise ValueError("drop_fraction must be in [0, 1)")
    zero_rows = np.flatnonzero(m.cells.sum(axis=1) == 0)
    n_keep = math.floor(len(zero_rows) * (1.0 - drop_fraction) + 1e-9)
    rng = np.random.default_rng(seed)
    kept_zero = rng.choice(zero_rows, size=n_keep, replace=False) if n_keep else np.array([], dtype=int)
    keep = np.sort(np.concatenate([np.flatnonzero(m.cells.sum(axis=1) > 0), kept_zero]).astype(int))
    return IndicatorMatrix(
        [m.window_start_times[i] for i in keep], list(m.alert_ids), m.cells[keep], m.window_minutes
    )
