"""In-memory model for daily temperature observations and ensemble forecasts.

The package indexes everything by forecast day t = 1..H, where t = 1 is the
initialization date. With the default initialization of October 1 and a
92-day horizon, t = 92 falls on December 31. This module owns that indexing
convention, the aggregation of sub-daily readings to daily means, and the
CSV formats used to exchange data between pipeline stages.

Temperatures are 64-bit floats in degrees Celsius; missing values are NaN
in memory and empty fields on disk. Values are serialized with ``repr`` so
a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

logger = logging.getLogger(__name__)

_OBS_HEADER = ["location_id", "date", "tmean"]
_ENS_HEADER = ["system", "member", "init_date", "valid_date", "location_id", "tmean"]


@dataclass(frozen=True)
class ForecastWindow:
    """A forecast period: an initialization date plus a horizon of H days.

    Day index t runs over {1..H}; t = 1 is the initialization date and
    t maps to the calendar date ``init_date + (t - 1)`` days.
    """

    init_date: dt.date
    horizon: int

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @classmethod
    def for_year(cls, year: int, month: int = 10, day: int = 1, horizon: int = 92) -> "ForecastWindow":
        """The window initialized on ``year-month-day`` (default October 1)."""
        return cls(dt.date(year, month, day), horizon)

    def date_of(self, t: int) -> dt.date:
        """Calendar date of forecast day ``t``."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"day index {t} outside 1..{self.horizon}")
        return self.init_date + dt.timedelta(days=t - 1)

    def day_index(self, date: dt.date) -> "int | None":
        """Forecast day of a calendar date, or None if outside the window."""
        t = (date - self.init_date).days + 1
        return t if 1 <= t <= self.horizon else None


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Daily mean temperatures for one location and one forecast window.

    Parameters
    ----------
    location_id : str
    year : int
        Initialization year of the window the series belongs to.
    window : ForecastWindow
    values : ndarray of shape (H,)
        Daily means in °C, NaN where missing. Stored read-only.
    """

    location_id: str
    year: int
    window: ForecastWindow
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 1 or arr.shape[0] != self.window.horizon:
            raise ValueError(
                f"series length {arr.size} does not match horizon {self.window.horizon}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def is_complete(self) -> bool:
        """True when the series has no missing days."""
        return not bool(np.isnan(self.values).any())


@dataclass(frozen=True, eq=False)
class SubdailySeries:
    """Sub-daily temperature readings, Q per day over an H-day window."""

    location_id: str
    year: int
    window: ForecastWindow
    values: np.ndarray
    readings_per_day: int = 4

    def __post_init__(self) -> None:
        if self.readings_per_day < 1:
            raise ValueError(f"readings_per_day must be >= 1, got {self.readings_per_day}")
        arr = np.array(self.values, dtype=float, copy=True)
        expected = self.window.horizon * self.readings_per_day
        if arr.ndim != 1 or arr.shape[0] != expected:
            raise ValueError(
                f"malformed subdaily block: {arr.size} readings, expected "
                f"{self.window.horizon} days x {self.readings_per_day}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def daily_mean(sub: SubdailySeries) -> DailySeries:
    """Average sub-daily readings into daily means.

    A day with any missing reading becomes a missing day; partial days are
    never imputed.
    """
    per_day = sub.values.reshape(sub.window.horizon, sub.readings_per_day)
    return DailySeries(sub.location_id, sub.year, sub.window, per_day.mean(axis=1))


@dataclass(frozen=True, eq=False)
class EnsembleMemberSeries:
    """One forecast member's daily series, tagged with its system of origin."""

    system: str
    member: str
    series: DailySeries

    def __post_init__(self) -> None:
        if not self.system:
            raise ValueError("system id must be non-empty")
        if not self.member:
            raise ValueError("member id must be non-empty")


class ObservationStore:
    """Read-only collection of observed series keyed by (location, year).

    Built once, then shared freely; iteration is sorted by key.
    """

    def __init__(self, series: Iterable[DailySeries] = (), *, rejected_rows: int = 0) -> None:
        self._by_key: dict[tuple[str, int], DailySeries] = {}
        for s in series:
            key = (s.location_id, s.year)
            if key in self._by_key:
                raise ValueError(f"duplicate observation series for {key}")
            self._by_key[key] = s
        self._keys = tuple(sorted(self._by_key))
        self.rejected_rows = rejected_rows

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self) -> Iterator[DailySeries]:
        return (self._by_key[k] for k in self._keys)

    def has(self, location_id: str, year: int) -> bool:
        return (location_id, year) in self._by_key

    def get(self, location_id: str, year: int) -> DailySeries:
        return self._by_key[(location_id, year)]

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(sorted({y for _, y in self._keys}))

    @property
    def location_ids(self) -> tuple[str, ...]:
        return tuple(sorted({loc for loc, _ in self._keys}))

    def years_for(self, location_id: str) -> tuple[int, ...]:
        return tuple(y for loc, y in self._keys if loc == location_id)


class EnsembleStore:
    """Read-only collection of ensemble members.

    Keys (system, member, year, location) are unique; iteration is sorted
    by key, so downstream results do not depend on input row order. Systems
    may be missing in some years, which the availability index exposes.
    """

    def __init__(
        self, entries: Iterable[EnsembleMemberSeries] = (), *, rejected_rows: int = 0
    ) -> None:
        self._by_key: dict[tuple[str, str, int, str], EnsembleMemberSeries] = {}
        for e in entries:
            key = (e.system, e.member, e.series.year, e.series.location_id)
            if key in self._by_key:
                raise ValueError(f"duplicate ensemble member for {key}")
            self._by_key[key] = e
        self._keys = tuple(sorted(self._by_key))
        self._by_year_loc: dict[tuple[int, str], list[tuple[str, str, int, str]]] = {}
        for key in self._keys:
            self._by_year_loc.setdefault((key[2], key[3]), []).append(key)
        self.rejected_rows = rejected_rows

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self) -> Iterator[EnsembleMemberSeries]:
        return (self._by_key[k] for k in self._keys)

    def get(self, system: str, member: str, year: int, location_id: str) -> EnsembleMemberSeries:
        return self._by_key[(system, member, year, location_id)]

    def members_for(self, system: str, year: int, location_id: str) -> list[EnsembleMemberSeries]:
        """All members of one system at one (year, location), sorted by member id."""
        keys = self._by_year_loc.get((year, location_id), [])
        return [self._by_key[k] for k in keys if k[0] == system]

    def availability(self) -> dict[tuple[str, int], int]:
        """Distinct member count per (system, year), over all locations."""
        members: dict[tuple[str, int], set[str]] = {}
        for system, member, year, _ in self._keys:
            members.setdefault((system, year), set()).add(member)
        return {k: len(v) for k, v in sorted(members.items())}

    @property
    def systems(self) -> tuple[str, ...]:
        return tuple(sorted({k[0] for k in self._keys}))

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(sorted({k[2] for k in self._keys}))

    @property
    def location_ids(self) -> tuple[str, ...]:
        return tuple(sorted({k[3] for k in self._keys}))

    def years_of(self, system: str) -> tuple[int, ...]:
        return tuple(sorted({k[2] for k in self._keys if k[0] == system}))


def pooled_members(store: EnsembleStore, year: int, location_id: str) -> list[DailySeries]:
    """Concatenate all systems' members for one (year, location).

    Systems with no data that year contribute nothing; the order is the
    store's deterministic (system, member) order.
    """
    keys = store._by_year_loc.get((year, location_id), [])
    return [store._by_key[k].series for k in keys]


def _format_value(value: float) -> str:
    return "" if np.isnan(value) else repr(float(value))


def _parse_value(text: str, name: str, row_num: int) -> float:
    if text == "":
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{name}: row {row_num}: unparseable temperature {text!r}") from None


def _parse_date(text: str, name: str, row_num: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"{name}: row {row_num}: unparseable date {text!r}") from None


def load_observations(
    path: "str | Path",
    *,
    init_month: int = 10,
    init_day: int = 1,
    horizon: int = 92,
) -> ObservationStore:
    """Read observations from ``location_id,date,tmean`` CSV.

    Each date is assigned to the forecast window (initialized on
    ``init_month``/``init_day``) that contains it; dates outside every
    window are dropped and counted in ``rejected_rows``.
    """
    path = Path(path)
    arrays: dict[tuple[str, int], np.ndarray] = {}
    seen: set[tuple[str, dt.date]] = set()
    rejected = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _OBS_HEADER:
            raise ValueError(
                f"{path.name}: expected header {','.join(_OBS_HEADER)!r}, got {header}"
            )
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path.name}: row {row_num} has {len(row)} fields, expected 3")
            loc, date_text, value_text = row
            date = _parse_date(date_text, path.name, row_num)
            if (loc, date) in seen:
                raise ValueError(
                    f"{path.name}: row {row_num}: duplicate observation for {loc} on {date}"
                )
            seen.add((loc, date))
            value = _parse_value(value_text, path.name, row_num)
            # a window can cross New Year, so the init year may lag the date's
            for year in (date.year, date.year - 1):
                window = ForecastWindow.for_year(year, init_month, init_day, horizon)
                t = window.day_index(date)
                if t is not None:
                    arrays.setdefault((loc, year), np.full(horizon, np.nan))[t - 1] = value
                    break
            else:
                rejected += 1
    if rejected:
        logger.warning("%s: rejected %d rows outside any forecast window", path.name, rejected)
    series = [
        DailySeries(loc, year, ForecastWindow.for_year(year, init_month, init_day, horizon), arr)
        for (loc, year), arr in arrays.items()
    ]
    return ObservationStore(series, rejected_rows=rejected)


def save_observations(store: ObservationStore, path: "str | Path") -> None:
    """Write observations as ``location_id,date,tmean`` CSV, sorted by key."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_OBS_HEADER)
        for s in store:
            for t in range(1, s.window.horizon + 1):
                writer.writerow(
                    [s.location_id, s.window.date_of(t).isoformat(), _format_value(s.values[t - 1])]
                )


def load_ensemble(path: "str | Path", *, horizon: int = 92) -> EnsembleStore:
    """Read ensemble forecasts from
    ``system,member,init_date,valid_date,location_id,tmean`` CSV.

    The window of each member starts at its ``init_date``; valid dates
    outside ``init_date .. init_date + horizon - 1`` are dropped and counted
    in ``rejected_rows``. The member's year is its initialization year.
    """
    path = Path(path)
    records: dict[tuple[str, str, int, str], tuple[ForecastWindow, np.ndarray]] = {}
    filled: set[tuple[tuple[str, str, int, str], int]] = set()
    rejected = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _ENS_HEADER:
            raise ValueError(
                f"{path.name}: expected header {','.join(_ENS_HEADER)!r}, got {header}"
            )
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path.name}: row {row_num} has {len(row)} fields, expected 6")
            system, member, init_text, valid_text, loc, value_text = row
            init = _parse_date(init_text, path.name, row_num)
            valid = _parse_date(valid_text, path.name, row_num)
            window = ForecastWindow(init, horizon)
            t = window.day_index(valid)
            if t is None:
                rejected += 1
                continue
            key = (system, member, init.year, loc)
            existing = records.get(key)
            if existing is None:
                records[key] = (window, np.full(horizon, np.nan))
            elif existing[0] != window:
                raise ValueError(
                    f"{path.name}: row {row_num}: init_date {init} conflicts with "
                    f"{existing[0].init_date} for {key}"
                )
            if (key, t) in filled:
                raise ValueError(
                    f"{path.name}: row {row_num}: duplicate value for {key} on {valid}"
                )
            filled.add((key, t))
            records[key][1][t - 1] = _parse_value(value_text, path.name, row_num)
    if rejected:
        logger.warning("%s: rejected %d rows outside the forecast window", path.name, rejected)
    entries = [
        EnsembleMemberSeries(system, member, DailySeries(loc, year, window, arr))
        for (system, member, year, loc), (window, arr) in records.items()
    ]
    return EnsembleStore(entries, rejected_rows=rejected)


def save_ensemble(store: EnsembleStore, path: "str | Path", *, system_suffix: str = "") -> None:
    """Write an ensemble as
    ``system,member,init_date,valid_date,location_id,tmean`` CSV.

    ``system_suffix`` is appended to every system id, which lets
    post-processed output live beside the raw data without key clashes.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ENS_HEADER)
        for e in store:
            s = e.series
            init_text = s.window.init_date.isoformat()
            for t in range(1, s.window.horizon + 1):
                writer.writerow(
                    [
                        e.system + system_suffix,
                        e.member,
                        init_text,
                        s.window.date_of(t).isoformat(),
                        s.location_id,
                        _format_value(s.values[t - 1]),
                    ]
                )
