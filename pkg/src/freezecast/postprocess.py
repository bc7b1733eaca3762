"""Two-stage member-by-member post-processing of ensemble temperatures.

Each forecast member is first standardized against its own system's
leave-one-year-out climatology,

    anomaly[t] = (f[t] - fc_mean[t]) / fc_sd[t],

then rescaled to the observed climatology of the same location,

    f_hat[t] = anomaly[t] * obs_sd[t] + obs_mean[t].

After the two affine steps the marginal mean and spread of each member
match the observations day by day, while the member's own trajectory shape
(and the ranking of members within the ensemble) is untouched. System
statistics pool all members and all years jointly around the global mean;
the year being forecast is always left out of both climatologies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import DailySeries, EnsembleMemberSeries, EnsembleStore, ObservationStore

logger = logging.getLogger(__name__)

OBS_SOURCE = "obs"
DEFAULT_SIGMA_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class ClimatologyStats:
    """Per-day climatological mean and spread for one location.

    ``source`` names where the samples came from: a forecast system id, or
    :data:`OBS_SOURCE` for observations. ``excluded_year`` records which
    year was left out, for audit.
    """

    location_id: str
    source: str
    excluded_year: "int | None"
    mean: np.ndarray
    sd: np.ndarray
    sample_count: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float, copy=True)
        sd = np.array(self.sd, dtype=float, copy=True)
        counts = np.array(self.sample_count, dtype=int, copy=True)
        if not (mean.ndim == 1 and mean.shape == sd.shape == counts.shape):
            raise ValueError("mean, sd, and sample_count must be 1-d arrays of equal length")
        if np.isnan(sd).any() or (sd < 0).any():
            raise ValueError("climatology sd must be non-negative")
        if (counts < 2).any():
            raise ValueError("climatology requires at least 2 samples per day")
        for arr in (mean, sd, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)
        object.__setattr__(self, "sample_count", counts)

    @property
    def horizon(self) -> int:
        return self.mean.shape[0]


class DailyClimatology(TransformerMixin, BaseEstimator):
    """Per-day standardizer with NaN-aware sample statistics.

    Like a column-wise scaler, but with the sample (n-1) standard
    deviation, missing-value-aware counts, and an optional centered
    pooling window of +/- ``window`` days (clipped at the edges of the
    period; 0 keeps statistics strictly per day).

    Attributes
    ----------
    mean_ : ndarray of shape (H,)
    scale_ : ndarray of shape (H,)
        Sample standard deviation per day.
    counts_ : ndarray of shape (H,)
        Finite samples contributing to each day.
    """

    def __init__(self, sigma_min: float = DEFAULT_SIGMA_MIN, window: int = 0):
        self.sigma_min = sigma_min
        self.window = window

    def fit(self, X, y=None) -> "DailyClimatology":
        if not (isinstance(self.window, (int, np.integer)) and self.window >= 0):
            raise ValueError(f"window must be a non-negative integer, got {self.window}")
        if not self.sigma_min >= 0:
            raise ValueError(f"sigma_min must be non-negative, got {self.sigma_min}")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"expected a (samples, days) matrix, got shape {X.shape}")
        h = X.shape[1]
        if self.window == 0:
            counts = np.isfinite(X).sum(axis=0)
            self._check_counts(counts)
            mean = np.nanmean(X, axis=0)
            scale = np.nanstd(X, axis=0, ddof=1)
        else:
            counts = np.zeros(h, dtype=int)
            mean = np.zeros(h)
            scale = np.zeros(h)
            for t in range(h):
                block = X[:, max(0, t - self.window) : min(h - 1, t + self.window) + 1]
                pooled = block[np.isfinite(block)]
                counts[t] = pooled.size
                if pooled.size < 2:
                    raise ValueError(f"insufficient samples at day {t + 1}: need at least 2")
                mean[t] = pooled.mean()
                scale[t] = pooled.std(ddof=1)
        self.n_features_in_ = h
        self.counts_ = counts
        self.mean_ = mean
        self.scale_ = scale
        return self

    @staticmethod
    def _check_counts(counts: np.ndarray) -> None:
        if np.any(counts < 2):
            day = int(np.argmax(counts < 2)) + 1
            raise ValueError(f"insufficient samples at day {day}: need at least 2")

    def _check_scale(self) -> None:
        degenerate = self.scale_ <= self.sigma_min
        if np.any(degenerate):
            day = int(np.argmax(degenerate)) + 1
            raise ValueError(f"degenerate climatology sd at day {day}")

    def _coerce(self, X) -> np.ndarray:
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected (samples, {self.n_features_in_}) matrix, got {X.shape}")
        return X

    def transform(self, X) -> np.ndarray:
        """Standardize to per-day anomalies: (X - mean) / sd."""
        X = self._coerce(X)
        self._check_scale()
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X) -> np.ndarray:
        """Map per-day anomalies back to the fitted climate: X * sd + mean."""
        return self._coerce(X) * self.scale_ + self.mean_


@dataclass(frozen=True, eq=False)
class SystemPanel:
    """All member series of one system at one location, one row per
    (year, member), in (year, member) order.

    Building climatologies from one shared panel keeps batch runs and
    one-off computations on the exact same arithmetic path, so their
    results agree bit for bit.
    """

    system: str
    location_id: str
    horizon: int
    years: tuple[int, ...]
    members: tuple[str, ...]
    matrix: np.ndarray

    @classmethod
    def from_store(cls, store: EnsembleStore, system: str, location_id: str) -> "SystemPanel":
        rows: list[np.ndarray] = []
        years: list[int] = []
        members: list[str] = []
        for year in store.years_of(system):
            for e in store.members_for(system, year, location_id):
                rows.append(e.series.values)
                years.append(year)
                members.append(e.member)
        if not rows:
            raise ValueError(f"no data for system {system!r} at location {location_id!r}")
        horizons = {r.shape[0] for r in rows}
        if len(horizons) != 1:
            raise ValueError(f"mixed horizons {sorted(horizons)} for system {system!r}")
        matrix = np.vstack(rows)
        matrix.setflags(write=False)
        return cls(system, location_id, horizons.pop(), tuple(years), tuple(members), matrix)

    def climatology(self, exclude_year: "int | None" = None, *, window: int = 0) -> ClimatologyStats:
        """Leave-one-year-out per-day statistics over members and years."""
        if exclude_year is not None and exclude_year not in self.years:
            logger.warning(
                "exclude_year %s has no %s data at %s; climatology uses all years",
                exclude_year,
                self.system,
                self.location_id,
            )
        mask = np.array([y != exclude_year for y in self.years])
        clim = DailyClimatology(window=window).fit(self.matrix[mask])
        return ClimatologyStats(
            location_id=self.location_id,
            source=self.system,
            excluded_year=exclude_year,
            mean=clim.mean_,
            sd=clim.scale_,
            sample_count=clim.counts_,
        )


def forecast_climatology(
    store: EnsembleStore,
    system: str,
    location_id: str,
    exclude_year: "int | None" = None,
    *,
    window: int = 0,
) -> ClimatologyStats:
    """System climatology at a location, pooling members and years jointly."""
    return SystemPanel.from_store(store, system, location_id).climatology(
        exclude_year, window=window
    )


def obs_climatology(
    obs: ObservationStore,
    location_id: str,
    exclude_year: "int | None" = None,
    *,
    window: int = 0,
) -> ClimatologyStats:
    """Observed climatology at a location, one sample per historical year."""
    years = obs.years_for(location_id)
    if not years:
        raise ValueError(f"no observations for location {location_id!r}")
    if exclude_year is not None and exclude_year not in years:
        logger.warning(
            "exclude_year %s has no observations at %s; climatology uses all years",
            exclude_year,
            location_id,
        )
    matrix = np.vstack([obs.get(location_id, y).values for y in years])
    mask = np.array([y != exclude_year for y in years])
    clim = DailyClimatology(window=window).fit(matrix[mask])
    return ClimatologyStats(
        location_id=location_id,
        source=OBS_SOURCE,
        excluded_year=exclude_year,
        mean=clim.mean_,
        sd=clim.scale_,
        sample_count=clim.counts_,
    )


@dataclass(frozen=True, eq=False)
class PostprocessedMember:
    """A member after both standardization stages, with its raw original."""

    system: str
    member: str
    series: DailySeries
    raw: EnsembleMemberSeries

    def __post_init__(self) -> None:
        if (self.system, self.member) != (self.raw.system, self.raw.member):
            raise ValueError("post-processed member identity must match its raw member")
        if not np.isfinite(self.series.values).all():
            raise ValueError("post-processed values must be finite")


def standardize_member(
    raw: EnsembleMemberSeries,
    clim: ClimatologyStats,
    sigma_min: float = DEFAULT_SIGMA_MIN,
) -> np.ndarray:
    """First stage: member values to anomalies of its own system's climate."""
    if clim.source != raw.system:
        raise ValueError(
            f"climatology source {clim.source!r} does not match member system {raw.system!r}"
        )
    values = raw.series.values
    if clim.horizon != values.shape[0]:
        raise ValueError(
            f"climatology length {clim.horizon} does not match series length {values.shape[0]}"
        )
    degenerate = clim.sd <= sigma_min
    if np.any(degenerate):
        raise ValueError(f"degenerate climatology sd at day {int(np.argmax(degenerate)) + 1}")
    return (values - clim.mean) / clim.sd


def restandardize_member(
    anom: np.ndarray,
    obs_clim: ClimatologyStats,
    raw: EnsembleMemberSeries,
) -> PostprocessedMember:
    """Second stage: anomalies rescaled to the observed climatology."""
    if obs_clim.source != OBS_SOURCE:
        raise ValueError(f"expected observation climatology source, got {obs_clim.source!r}")
    anom = np.asarray(anom, dtype=float)
    if anom.ndim != 1 or anom.shape[0] != obs_clim.horizon:
        raise ValueError(
            f"anomaly length {anom.size} does not match climatology length {obs_clim.horizon}"
        )
    if not np.isfinite(anom).all():
        raise ValueError("anomalies must be finite")
    values = anom * obs_clim.sd + obs_clim.mean
    series = DailySeries(raw.series.location_id, raw.series.year, raw.series.window, values)
    return PostprocessedMember(raw.system, raw.member, series, raw)


def postprocess_ensemble(
    store: EnsembleStore,
    obs: ObservationStore,
    year: int,
    location_id: str,
    *,
    sigma_min: float = DEFAULT_SIGMA_MIN,
    window: int = 0,
) -> list[PostprocessedMember]:
    """Post-process every available member for one (year, location).

    Both climatologies exclude ``year``. Systems without data that year
    contribute nothing; an entirely empty year yields an empty list.
    Member order follows the store's deterministic (system, member) order.
    """
    members_by_system = {
        system: store.members_for(system, year, location_id) for system in store.systems
    }
    members_by_system = {k: v for k, v in members_by_system.items() if v}
    if not members_by_system:
        return []
    obs_stats = obs_climatology(obs, location_id, exclude_year=year, window=window)
    out: list[PostprocessedMember] = []
    for system in sorted(members_by_system):
        fc_stats = forecast_climatology(
            store, system, location_id, exclude_year=year, window=window
        )
        for e in members_by_system[system]:
            anom = standardize_member(e, fc_stats, sigma_min)
            out.append(restandardize_member(anom, obs_stats, e))
    return out


def postprocessed_store(members: Iterable[PostprocessedMember]) -> EnsembleStore:
    """Repack post-processed members as an ensemble store (for saving)."""
    return EnsembleStore(
        [EnsembleMemberSeries(m.system, m.member, m.series) for m in members]
    )
