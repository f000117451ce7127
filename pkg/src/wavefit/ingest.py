"""
Daily count ingestion and weekly averaging.

Weeks are anchored to a configured start date, not to ISO weeks. Each weekly
point sits at the mean day of its seven days, carries the mean daily count
and the standard error of that mean.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)

METRICS = ("cases", "deaths")
#: deaths weeks start this many days after the cases weeks
DEATHS_OFFSET_DAYS = 14

DEFAULT_COLUMNS = {"date": "date", "region": "region", "cases": "new_cases", "deaths": "new_deaths"}
#: column names used by the WHO global daily export
WHO_COLUMNS = {"date": "Date_reported", "region": "Country_code", "cases": "New_cases", "deaths": "New_deaths"}


class DataError(ValueError):
    """Input data is malformed, incomplete or inconsistent."""


@dataclass(frozen=True)
class RawDailySeries:
    region: str
    metric: str
    dates: tuple
    counts: np.ndarray

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if len(self.dates) != len(self.counts):
            raise ValueError("dates and counts differ in length")
        d = [x.toordinal() for x in self.dates]
        if any(b <= a for a, b in zip(d, d[1:])):
            raise DataError(f"{self.region}/{self.metric}: dates must be strictly increasing")
        c = np.asarray(self.counts, dtype=float)
        if not np.all(np.isfinite(c)):
            raise DataError(f"{self.region}/{self.metric}: non-finite counts")
        if np.any(c < 0):
            raise DataError(f"{self.region}/{self.metric}: negative counts")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_records(cls, region, metric, records, negative="reject"):
        """
        Build from unordered ``(date, count)`` pairs.

        ``negative`` is the policy for negative counts (source-data
        corrections): ``"reject"`` raises, ``"clamp"`` replaces them by 0.
        """
        recs = sorted(records, key=lambda r: r[0])
        dates = [r[0] for r in recs]
        if len(set(dates)) != len(dates):
            raise DataError(f"{region}/{metric}: duplicate dates")
        counts = np.array([float(r[1]) for r in recs])
        neg = counts < 0
        if np.any(neg):
            if negative == "clamp":
                log.warning("%s/%s: clamping %d negative counts to zero", region, metric, int(neg.sum()))
                counts = np.where(neg, 0.0, counts)
            elif negative == "reject":
                bad = [dates[i].isoformat() for i in np.flatnonzero(neg)]
                raise DataError(f"{region}/{metric}: negative counts on {', '.join(bad[:5])}")
            else:
                raise ValueError(f"unknown negative-count policy {negative!r}")
        return cls(region, metric, tuple(dates), counts)


@dataclass(frozen=True)
class WeeklySeries:
    """
    Weekly-averaged daily counts on a region's day-index axis.

    ``t`` is measured in days from ``origin_date``.
    """

    region: str
    metric: str
    origin_date: dt.date
    t: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    n_days: np.ndarray

    def __len__(self):
        return len(self.t)

    def to_csv(self):
        """Serialize as ``t,y,sigma,n_days`` rows with a metadata comment line."""
        buf = io.StringIO()
        buf.write(f"# region={self.region} metric={self.metric} origin={self.origin_date.isoformat()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "y", "sigma", "n_days"])
        for row in zip(self.t, self.y, self.sigma, self.n_days):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DataError("weekly series file lacks its metadata line")
        meta = dict(kv.split("=", 1) for kv in lines[0][1:].split())
        rows = list(csv.DictReader(lines[1:]))
        return cls(
            meta["region"],
            meta["metric"],
            dt.date.fromisoformat(meta["origin"]),
            np.array([float(r["t"]) for r in rows]),
            np.array([float(r["y"]) for r in rows]),
            np.array([float(r["sigma"]) for r in rows]),
            np.array([int(r["n_days"]) for r in rows]),
        )


def _as_date(d):
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    return dt.date.fromisoformat(str(d))


def deaths_window(cases_start):
    """First day of the first deaths week: 14 days after the first cases week."""
    return _as_date(cases_start) + dt.timedelta(days=DEATHS_OFFSET_DAYS)


def zero_variance_sigma(y):
    return max(1.0, 0.01 * abs(y))


def aggregate_weekly(raw, start, cutoff, origin=None):
    """
    Average a daily series over consecutive 7-day blocks.

    Parameters
    ----------
    raw : RawDailySeries
    start : date
        First day of the first week.
    cutoff : date
        Last day that may be included (inclusive). A trailing partial week is
        dropped.
    origin : date, optional
        Day 0 of the returned ``t`` axis; defaults to ``start``.

    Returns
    -------
    WeeklySeries
        Week ``k`` sits at ``t = (start - origin) + 7k + 3``.
    """
    start, cutoff = _as_date(start), _as_date(cutoff)
    origin = start if origin is None else _as_date(origin)
    n_weeks = ((cutoff - start).days + 1) // 7
    if n_weeks < 1:
        raise DataError(f"{raw.region}/{raw.metric}: window {start}..{cutoff} is shorter than one week")
    lookup = {d: c for d, c in zip(raw.dates, raw.counts)}
    offset = (start - origin).days
    t, y, sigma, n = [], [], [], []
    for k in range(n_weeks):
        days = [start + dt.timedelta(days=7 * k + j) for j in range(7)]
        missing = [d for d in days if d not in lookup]
        if missing:
            raise DataError(
                f"{raw.region}/{raw.metric}: missing daily data in week {k} "
                f"({missing[0].isoformat()}..{missing[-1].isoformat()})"
            )
        vals = np.array([lookup[d] for d in days])
        m = vals.mean()
        sd = vals.std(ddof=1)
        t.append(offset + 7 * k + 3.0)
        y.append(m)
        sigma.append(sd / np.sqrt(7) if sd > 0 else zero_variance_sigma(m))
        n.append(7)
    return WeeklySeries(raw.region, raw.metric, origin, np.array(t), np.array(y), np.array(sigma), np.array(n))


def inflate_errors(series, fraction, peak_height):
    """Add ``fraction * peak_height`` in quadrature to every standard error."""
    if fraction < 0:
        raise ValueError("inflation fraction must be >= 0")
    if not peak_height > 0:
        raise ValueError("peak height must be positive")
    if fraction == 0:
        return series
    extra = fraction * peak_height
    return replace(series, sigma=np.sqrt(series.sigma**2 + extra**2))


def read_daily_csv(source, columns=None, negative="reject", regions=None):
    """
    Parse a delimited daily file with one row per (date, region).

    Parameters
    ----------
    source : path or file-like
    columns : dict, optional
        Maps the roles ``date``, ``region``, ``cases``, ``deaths`` to header
        names. Defaults to :data:`DEFAULT_COLUMNS`.
    negative : {"reject", "clamp"}
    regions : iterable of str, optional
        Keep only these regions; an absent one is an error.

    Returns
    -------
    dict
        ``{(region, metric): RawDailySeries}``
    """
    columns = {**DEFAULT_COLUMNS, **(columns or {})}
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8-sig", newline="") as fh:
            text = fh.read()
    if not text.strip():
        raise DataError("data file is empty")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    header = reader.fieldnames or []
    absent = [v for v in columns.values() if v not in header]
    if absent:
        raise DataError(f"missing columns {absent}; header is {header}")
    wanted = None if regions is None else set(regions)
    records = {}
    errors = []
    for row in reader:
        line = reader.line_num
        region = row[columns["region"]].strip()
        if wanted is not None and region not in wanted:
            continue
        try:
            date = dt.date.fromisoformat(row[columns["date"]].strip()[:10])
            vals = {m: float(row[columns[m]] or 0.0) for m in METRICS}
        except (ValueError, TypeError) as exc:
            errors.append(f"line {line}: {exc}")
            continue
        for m in METRICS:
            records.setdefault((region, m), []).append((date, vals[m]))
    if errors:
        raise DataError("unparseable rows:\n  " + "\n  ".join(errors[:20]))
    if not records:
        raise DataError("no data rows")
    if wanted is not None:
        missing = sorted(r for r in wanted if (r, "cases") not in records)
        if missing:
            raise DataError(f"regions not present in data: {missing}")
    return {
        key: RawDailySeries.from_records(key[0], key[1], recs, negative=negative)
        for key, recs in sorted(records.items())
    }
