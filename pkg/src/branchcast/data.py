"""Transaction ingest, cleaning, daily aggregation and value transforms.

Daily series are stored calendar-complete: ``dates`` holds every day between
the first and last business day and ``values`` carries ``NaN`` on gap days
(closed days, removed corrections, zero days in log space).
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CorruptInputError,
    DegenerateScaleError,
    DomainError,
    EmptySeriesError,
    FormatError,
)

TRANSACTION_FIELDS = ("timestamp", "item_text", "unit_price", "quantity", "is_tip")
_MAX_MALFORMED_FRACTION = 0.10


def as_day(value) -> np.datetime64:
    """Coerce a date-like value (str, date, datetime64) to ``datetime64[D]``."""
    if isinstance(value, datetime):
        value = value.date()
    return np.datetime64(value, "D")


def as_days(values) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype == "datetime64[D]":
        return values
    return np.array([as_day(v) for v in values], dtype="datetime64[D]")


def date_range(start, end) -> np.ndarray:
    """Inclusive daily range."""
    start, end = as_day(start), as_day(end)
    return np.arange(start, end + np.timedelta64(1, "D"), dtype="datetime64[D]")


@dataclass(frozen=True)
class TransactionRecord:
    timestamp: datetime
    item_text: str
    unit_price: float
    quantity: float
    is_tip: bool = False

    def __post_init__(self):
        if self.quantity == 0:
            raise ValueError("quantity must be non-zero")

    @property
    def amount(self) -> float:
        return self.unit_price * self.quantity


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Calendar-indexed daily values for one entity; ``NaN`` marks a gap."""

    entity_id: str
    dates: np.ndarray
    values: np.ndarray
    is_log_space: bool = False
    is_normalized: bool = False
    log_offset: float = 0.0

    def __post_init__(self):
        dates = as_days(self.dates)
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise ValueError("dates and values must be 1-d arrays of equal length")
        if dates.size > 1 and np.any(np.diff(dates) != np.timedelta64(1, "D")):
            raise ValueError("dates must be strictly increasing with daily spacing")
        if not self.is_log_space and not self.is_normalized:
            neg = np.flatnonzero(values < 0)
            if neg.size:
                raise DomainError(f"negative net sales on {dates[neg[0]]}")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_observations(cls, entity_id, dates, values, **kwargs) -> "DailySeries":
        """Build a calendar-complete series; days not listed become gaps."""
        dates = as_days(dates)
        values = np.asarray(values, dtype=float)
        if dates.size == 0:
            return cls(entity_id, dates, values, **kwargs)
        order = np.argsort(dates, kind="stable")
        dates, values = dates[order], values[order]
        if np.any(np.diff(dates) == np.timedelta64(0, "D")):
            raise ValueError("duplicate dates")
        full = date_range(dates[0], dates[-1])
        out = np.full(full.shape, np.nan)
        out[(dates - full[0]).astype(int)] = values
        return cls(entity_id, full, out, **kwargs)

    def __len__(self):
        return self.dates.size

    def __eq__(self, other):
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            self.entity_id == other.entity_id
            and self.is_log_space == other.is_log_space
            and self.is_normalized == other.is_normalized
            and self.log_offset == other.log_offset
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    @property
    def start_date(self):
        return self.dates[0] if self.dates.size else None

    @property
    def end_date(self):
        return self.dates[-1] if self.dates.size else None

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def observed_dates(self) -> np.ndarray:
        return self.dates[self.observed]

    def observed_values(self) -> np.ndarray:
        return self.values[self.observed]

    def window(self, start=None, end=None) -> "DailySeries":
        """Inclusive calendar slice; bounds outside the coverage are clipped."""
        mask = np.ones(self.dates.shape, dtype=bool)
        if start is not None:
            mask &= self.dates >= as_day(start)
        if end is not None:
            mask &= self.dates <= as_day(end)
        return replace(self, dates=self.dates[mask], values=self.values[mask])

    def value_on(self, day) -> float:
        """Value on ``day``; ``NaN`` for gaps and days outside the coverage."""
        if not self.dates.size:
            return math.nan
        i = int((as_day(day) - self.dates[0]).astype(int))
        if 0 <= i < self.dates.size:
            return float(self.values[i])
        return math.nan


@dataclass(frozen=True)
class CleaningConfig:
    cutoff_hour: int = 6
    drop_tips: bool = True
    drop_negative_days: bool = True
    valid_from: datetime | None = None
    valid_to: datetime | None = None

    def __post_init__(self):
        if not 0 <= self.cutoff_hour < 12:
            raise ValueError("cutoff_hour must satisfy 0 <= cutoff_hour < 12")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CleaningConfig":
        d = dict(d)
        for key in ("valid_from", "valid_to"):
            if d.get(key) is not None:
                d[key] = _parse_timestamp(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "cutoff_hour": self.cutoff_hour,
            "drop_tips": self.drop_tips,
            "drop_negative_days": self.drop_negative_days,
            "valid_from": self.valid_from.isoformat() if self.valid_from else None,
            "valid_to": self.valid_to.isoformat() if self.valid_to else None,
        }


@dataclass
class CleaningReport:
    """Drop tallies.  ``n_input == n_retained + n_dropped_noise + n_dropped_tips``;
    removed negative days are counted in days, not records."""

    n_input: int = 0
    n_retained: int = 0
    n_dropped_noise: int = 0
    n_dropped_tips: int = 0
    n_negative_days_removed: int = 0

    @property
    def fraction_dropped(self) -> float:
        if self.n_input == 0:
            return 0.0
        return (self.n_dropped_noise + self.n_dropped_tips) / self.n_input

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_retained": self.n_retained,
            "n_dropped_noise": self.n_dropped_noise,
            "n_dropped_tips": self.n_dropped_tips,
            "n_negative_days_removed": self.n_negative_days_removed,
            "fraction_dropped": self.fraction_dropped,
        }


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    malformed: list = field(default_factory=list)  # (line number, raw row, reason)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def _parse_timestamp(text) -> datetime:
    if isinstance(text, datetime):
        return text
    return datetime.fromisoformat(str(text).strip())


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t == "true":
        return True
    if t == "false":
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_transactions(raw, schema: Mapping[str, str] | None = None) -> ParseResult:
    """Parse transaction CSV text.

    ``raw`` may be bytes, a string, or a file object.  ``schema`` maps the
    canonical field names to the column headers used in the file.  Rows that
    fail validation are collected in ``ParseResult.malformed``.
    """
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not UTF-8: {exc}") from None
    columns = {f: f for f in TRANSACTION_FIELDS}
    columns.update(schema or {})

    reader = csv.reader(io.StringIO(raw))
    header = next(reader, None)
    if header is None:
        raise FormatError("missing header row")
    header = [h.strip() for h in header]
    try:
        idx = {f: header.index(columns[f]) for f in TRANSACTION_FIELDS if f != "is_tip"}
    except ValueError:
        raise FormatError(f"unreadable header {header!r}; expected columns {list(columns.values())}") from None
    tip_idx = header.index(columns["is_tip"]) if columns["is_tip"] in header else None

    result = ParseResult()
    n_rows = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        n_rows += 1
        try:
            rec = TransactionRecord(
                timestamp=_parse_timestamp(row[idx["timestamp"]]),
                item_text=row[idx["item_text"]],
                unit_price=float(row[idx["unit_price"]]),
                quantity=float(row[idx["quantity"]]),
                is_tip=_parse_bool(row[tip_idx]) if tip_idx is not None else False,
            )
            if not (math.isfinite(rec.unit_price) and math.isfinite(rec.quantity)):
                raise ValueError("non-finite number")
        except (ValueError, IndexError) as exc:
            result.malformed.append((lineno, row, str(exc)))
            continue
        result.records.append(rec)

    if n_rows and len(result.malformed) > _MAX_MALFORMED_FRACTION * n_rows:
        first = result.malformed[:5]
        listing = "; ".join(f"line {ln}: {reason}" for ln, _, reason in first)
        raise CorruptInputError(
            f"{len(result.malformed)} of {n_rows} rows malformed (first: {listing})", first
        )
    return result


def clean_transactions(records: Iterable[TransactionRecord], cfg: CleaningConfig = CleaningConfig()):
    """Drop tips and out-of-window timestamps; returns ``(kept, report)``."""
    records = list(records)
    report = CleaningReport(n_input=len(records))
    kept = []
    for rec in records:
        ts = rec.timestamp
        if (cfg.valid_from is not None and ts < cfg.valid_from) or (
            cfg.valid_to is not None and ts > cfg.valid_to
        ):
            report.n_dropped_noise += 1
        elif cfg.drop_tips and rec.is_tip:
            report.n_dropped_tips += 1
        else:
            kept.append(rec)
    report.n_retained = len(kept)
    return kept, report


def business_day(ts: datetime, cutoff_hour: int) -> date:
    """Sales before ``cutoff_hour`` belong to the previous business day."""
    d = ts.date()
    if ts.hour < cutoff_hour:
        d -= timedelta(days=1)
    return d


def aggregate_daily(
    records: Iterable[TransactionRecord],
    cfg: CleaningConfig = CleaningConfig(),
    entity_id: str = "",
    report: CleaningReport | None = None,
) -> DailySeries:
    """Sum ``unit_price * quantity`` per business day.

    Totals use ``math.fsum`` so the result does not depend on record order.
    Negative days become gaps when ``cfg.drop_negative_days`` (tallied on
    ``report`` if given).
    """
    parts = defaultdict(list)
    for rec in records:
        parts[business_day(rec.timestamp, cfg.cutoff_hour)].append(rec.amount)
    if not parts:
        raise EmptySeriesError("no records to aggregate")
    days = sorted(parts)
    totals = np.array([math.fsum(parts[d]) for d in days])
    negative = totals < 0
    if negative.any():
        if not cfg.drop_negative_days:
            raise DomainError(f"negative daily total on {days[int(np.argmax(negative))]}")
        if report is not None:
            report.n_negative_days_removed += int(negative.sum())
        totals[negative] = np.nan
    return DailySeries.from_observations(entity_id, days, totals)


def log2_transform(series: DailySeries, log_offset: float = 0.0) -> DailySeries:
    """``log2(value + log_offset)``.

    With ``log_offset == 0`` a recorded zero is treated as a closed day (gap).
    """
    if series.is_log_space:
        raise DomainError("series is already in log space")
    v = series.values
    if log_offset == 0.0:
        bad = np.flatnonzero(v < 0)
    else:
        bad = np.flatnonzero(v <= -log_offset)
    if bad.size:
        raise DomainError(f"cannot take log2 of {v[bad[0]]} on {series.dates[bad[0]]}")
    with np.errstate(divide="ignore"):
        out = np.log2(v + log_offset)
    if log_offset == 0.0:
        out[v == 0] = np.nan
    return replace(series, values=out, is_log_space=True, log_offset=float(log_offset))


def exp2_inverse(series: DailySeries) -> DailySeries:
    if not series.is_log_space:
        raise DomainError("series is not in log space")
    out = np.exp2(series.values) - series.log_offset
    if series.log_offset:
        out = np.maximum(out, 0.0)
    return replace(series, values=out, is_log_space=False, log_offset=0.0)


def normalize(series: DailySeries):
    """Divide by the series maximum; returns ``(normalized, scale)``."""
    if series.is_log_space:
        raise DomainError("normalize expects observation-space values")
    if series.n_observed == 0:
        raise DegenerateScaleError("series has no observations")
    scale = float(np.nanmax(series.values))
    if scale <= 0:
        raise DegenerateScaleError(f"{series.entity_id}: maximum is {scale}, cannot normalize")
    return replace(series, values=series.values / scale, is_normalized=True), scale


def read_series_csv(path, entity_id: str | None = None) -> DailySeries:
    """Read a ``date,value`` file; omitted days become gaps."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "value"]:
            raise FormatError(f"{path}: expected header 'date,value', got {header!r}")
        dates, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dates.append(np.datetime64(row[0].strip(), "D"))
                values.append(float(row[1]))
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: bad row {row!r}") from None
    if not dates:
        raise EmptySeriesError(f"{path}: no rows")
    return DailySeries.from_observations(entity_id or path.stem, dates, values)


def series_to_csv(series: DailySeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "value"])
    for d, v in zip(series.observed_dates(), series.observed_values()):
        w.writerow([str(d), repr(float(v))])
    return buf.getvalue()
