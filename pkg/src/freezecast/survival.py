"""Event extraction and Kaplan-Meier estimation of time-to-freeze curves.

A daily series is reduced to a pair (T, d): the first day T whose mean
temperature falls strictly below a threshold, with d = 1, or (H, 0) when no
day in the window does. A set of such pairs, one per historical year or one
per ensemble member, yields a survival curve over forecast days via the
Kaplan-Meier product-limit estimator:

    n_t = #{i : T_i >= t}    (at risk)
    e_t = #{i : T_i = t, d_i = 1}    (events)
    S(t) = prod_{l <= t} (1 - e_l / n_l),  with the factor 1 when n_l = 0.

The same estimator serves three roles: leave-one-year-out climatology from
observations, and forecast curves from raw or post-processed members. With
censoring only at the horizon the product telescopes to the empirical
fraction of individuals still event-free, which the tests use as an oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import DailySeries, ObservationStore


class InvariantViolation(ValueError):
    """A computed object broke one of its mathematical guarantees."""


@dataclass(frozen=True)
class EventObservation:
    """A possibly censored event time: day index plus event indicator.

    ``event = 1`` means the freeze occurred on day ``time``; ``event = 0``
    means the individual was still freeze-free when last seen on day
    ``time``. The forecasting pipeline censors only at the horizon, so
    there d = 0 implies T = H; the estimator itself accepts the general
    form.
    """

    time: int
    event: int

    def __post_init__(self) -> None:
        if self.time != int(self.time) or self.time < 1:
            raise ValueError(f"event time must be a positive integer, got {self.time}")
        if self.event not in (0, 1):
            raise ValueError(f"event indicator must be 0 or 1, got {self.event}")


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Survival probabilities S(t) on the day grid t = 0..H.

    Constructor enforces S(0) = 1, monotone non-increase, and range [0, 1];
    violations raise :class:`InvariantViolation`.
    """

    horizon: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 1 or arr.shape[0] != self.horizon + 1:
            raise InvariantViolation(
                f"curve length {arr.size} does not match horizon {self.horizon} + 1"
            )
        if not arr[0] == 1.0:
            raise InvariantViolation(f"S(0) must be 1, got {arr[0]}")
        if np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0:
            raise InvariantViolation("survival probabilities must lie in [0, 1]")
        if np.any(np.diff(arr) > 0.0):
            raise InvariantViolation("survival curve must be monotone non-increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


class KaplanMeierEstimator(BaseEstimator):
    """Kaplan-Meier product-limit estimator on a fixed day grid.

    Parameters
    ----------
    horizon : int
        Number of forecast days H; event times must lie in 1..H and the
        fitted curve covers t = 0..H.

    Attributes
    ----------
    risk_counts_ : ndarray of shape (H,)
        n_t, individuals at risk entering day t = 1..H.
    event_counts_ : ndarray of shape (H,)
        e_t, events on day t.
    hazard_ : ndarray of shape (H,)
        e_t / n_t, defined as 0 where the risk set is empty.
    survival_function_ : ndarray of shape (H + 1,)
        S(t) for t = 0..H.
    survival_curve_ : SurvivalCurve
        The same values wrapped with invariant checks.
    """

    def __init__(self, horizon: int = 92):
        self.horizon = horizon

    def fit(self, T, d=None) -> "KaplanMeierEstimator":
        """Estimate the survival function from event times ``T``.

        Parameters
        ----------
        T : array-like of int
            Event or censoring day per individual, in 1..horizon.
        d : array-like of {0, 1}, optional
            Event indicators; omitted means every time is an event.
        """
        times = np.asarray(T)
        if times.size == 0:
            raise ValueError("no observations")
        if times.ndim != 1 or not np.all(times == times.astype(int)):
            raise ValueError("event times must be a 1-d array of integers")
        times = times.astype(int)
        if times.min() < 1 or times.max() > self.horizon:
            raise ValueError(f"event times must lie in 1..{self.horizon}")
        if d is None:
            ind = np.ones(times.size, dtype=int)
        else:
            ind = np.asarray(d)
            if ind.shape != times.shape:
                raise ValueError("event indicators must match event times in shape")
            if not np.isin(ind, (0, 1)).all():
                raise ValueError("event indicators must be 0 or 1")
            ind = ind.astype(int)

        n = times.size
        counts_all = np.bincount(times, minlength=self.horizon + 1)
        counts_events = np.bincount(times[ind == 1], minlength=self.horizon + 1)
        # n_t = n - #{T <= t-1}, for t = 1..H
        at_risk = n - np.cumsum(counts_all)[: self.horizon]
        events = counts_events[1 : self.horizon + 1]
        hazard = np.zeros(self.horizon)
        np.divide(events, at_risk, out=hazard, where=at_risk > 0)

        self.risk_counts_ = at_risk
        self.event_counts_ = events
        self.hazard_ = hazard
        self.survival_function_ = np.concatenate(([1.0], np.cumprod(1.0 - hazard)))
        self.survival_curve_ = SurvivalCurve(self.horizon, self.survival_function_)
        return self

    def predict(self, t) -> np.ndarray:
        """Evaluate the fitted S(t) at day indices ``t`` in 0..horizon."""
        check_is_fitted(self, "survival_function_")
        idx = np.asarray(t, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() > self.horizon):
            raise ValueError(f"day indices must lie in 0..{self.horizon}")
        return self.survival_function_[idx]


def km_curve(data: Iterable[EventObservation], horizon: int) -> SurvivalCurve:
    """Kaplan-Meier curve from event observations (functional front end)."""
    pairs = list(data)
    if not pairs:
        raise ValueError("no observations")
    T = np.array([e.time for e in pairs])
    d = np.array([e.event for e in pairs])
    return KaplanMeierEstimator(horizon=horizon).fit(T, d).survival_curve_


def time_to_event(series: DailySeries, threshold: float = 0.0) -> EventObservation:
    """First day strictly below ``threshold``, or censoring at the horizon.

    A missing day before the event (or anywhere, when no event occurs)
    makes the event time undecidable and raises an error.
    """
    values = series.values
    below = values < threshold  # NaN compares False
    missing = np.isnan(values)
    if below.any():
        t = int(np.argmax(below)) + 1
        if missing[: t - 1].any():
            raise ValueError(
                f"gap before event in series ({series.location_id}, {series.year})"
            )
        return EventObservation(t, 1)
    if missing.any():
        raise ValueError(
            f"gap before event in series ({series.location_id}, {series.year}): "
            "cannot certify a freeze-free window with missing days"
        )
    return EventObservation(series.window.horizon, 0)


def _common_horizon(series: Sequence[DailySeries], horizon: "int | None") -> int:
    horizons = {s.window.horizon for s in series}
    if horizon is None:
        if len(horizons) != 1:
            raise ValueError(f"mixed horizons {sorted(horizons)}; pass horizon explicitly")
        return horizons.pop()
    if horizons - {horizon}:
        raise ValueError(f"series horizons {sorted(horizons)} do not match horizon {horizon}")
    return horizon


def climatology_curve(
    obs: ObservationStore,
    location_id: str,
    exclude_year: "int | None" = None,
    threshold: float = 0.0,
    horizon: "int | None" = None,
) -> SurvivalCurve:
    """Leave-one-year-out climatological survival curve for one location.

    One event observation per historical year at ``location_id``, skipping
    ``exclude_year``, fed through the Kaplan-Meier estimator.
    """
    series = [
        obs.get(location_id, year)
        for year in obs.years_for(location_id)
        if year != exclude_year
    ]
    if not series:
        raise ValueError(f"no observations for location {location_id!r}")
    h = _common_horizon(series, horizon)
    return km_curve((time_to_event(s, threshold) for s in series), horizon=h)


def forecast_curve(
    members: Sequence[DailySeries],
    threshold: float = 0.0,
    horizon: "int | None" = None,
) -> SurvivalCurve:
    """Survival curve of an ensemble, each member treated as an individual.

    Applied to raw members this is the raw forecast curve; applied to
    post-processed members, the post-processed forecast curve.
    """
    members = list(members)
    if not members:
        raise ValueError("no observations: empty ensemble")
    h = _common_horizon(members, horizon)
    return km_curve((time_to_event(m, threshold) for m in members), horizon=h)


def event_step_curve(event: EventObservation, horizon: int) -> SurvivalCurve:
    """Degenerate curve of a single outcome: 1 before the event, 0 after."""
    values = np.ones(horizon + 1)
    if event.event == 1:
        values[event.time :] = 0.0
    return SurvivalCurve(horizon, values)


def observed_curve(series: DailySeries, threshold: float = 0.0) -> SurvivalCurve:
    """Step curve of what actually happened in one observed series."""
    return event_step_curve(time_to_event(series, threshold), series.window.horizon)


_CURVE_HEADER = ["location_id", "year", "model", "t", "S"]

CurveKey = "tuple[str, int, str]"


def save_curves(curves: "dict[tuple[str, int, str], SurvivalCurve]", path: "str | Path") -> None:
    """Write curves as long-form ``location_id,year,model,t,S`` CSV.

    Model labels follow the pipeline convention: C for climatology, R for
    raw ensemble, P for post-processed ensemble, obs for the outcome step
    curve.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CURVE_HEADER)
        for (location_id, year, model), curve in sorted(curves.items()):
            for t in range(curve.horizon + 1):
                writer.writerow([location_id, year, model, t, repr(float(curve.values[t]))])


def load_curves(path: "str | Path") -> "dict[tuple[str, int, str], SurvivalCurve]":
    """Read curves written by :func:`save_curves`, re-checking invariants."""
    path = Path(path)
    rows: dict[tuple[str, int, str], dict[int, float]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CURVE_HEADER:
            raise ValueError(
                f"{path.name}: expected header {','.join(_CURVE_HEADER)!r}, got {header}"
            )
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path.name}: row {row_num} has {len(row)} fields, expected 5")
            try:
                key = (row[0], int(row[1]), row[2])
                t, s = int(row[3]), float(row[4])
            except ValueError as exc:
                raise ValueError(f"{path.name}: row {row_num}: {exc}") from None
            per_curve = rows.setdefault(key, {})
            if t in per_curve:
                raise ValueError(f"{path.name}: row {row_num}: duplicate day {t} for {key}")
            per_curve[t] = s
    curves = {}
    for key, per_curve in rows.items():
        horizon = max(per_curve)
        if sorted(per_curve) != list(range(horizon + 1)):
            raise ValueError(f"{path.name}: day indices for {key} are not contiguous 0..{horizon}")
        curves[key] = SurvivalCurve(horizon, [per_curve[t] for t in range(horizon + 1)])
    return curves
