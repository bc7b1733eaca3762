"""Synthetic truth series and multi-system ensembles for desk-scale runs.

The generator is the controllable stand-in for real gridded observations
and hindcast archives. Each daily series is a linear autumn cooling trend
plus a stationary AR(1) anomaly; ensembles redraw the anomaly per member
and can inject a constant system bias and a dispersion factor on the
anomaly scale. A configurable fraction of the anomaly variance can be made
common to the truth and all members of a year, which gives the forecasts
genuine predictable signal while keeping unbiased members exchangeable
with the truth.

Seeds are derived per (location, year, member) from the master seed, so
any subset regenerates bit-identically and generation order is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .data import (
    DailySeries,
    EnsembleMemberSeries,
    EnsembleStore,
    ForecastWindow,
    ObservationStore,
)
from .grid import Location, LocationSet
from .seeding import spawn_rng


def ar1_series(rho: float, sd: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) sample path of length n.

    x[t] = rho * x[t-1] + eps[t] with innovation sd ``sd``; the initial
    state is drawn from the stationary marginal, so every x[t] has
    variance sd^2 / (1 - rho^2).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"ar coefficient must lie in [0, 1), got {rho}")
    if sd < 0.0:
        raise ValueError(f"innovation sd must be non-negative, got {sd}")
    eps = rng.normal(0.0, sd, size=n)
    if n == 0 or rho == 0.0:
        return eps
    start = rng.normal(0.0, sd / math.sqrt(1.0 - rho * rho))
    zi = sp_signal.lfiltic([1.0], [1.0, -rho], y=[start])
    out, _ = sp_signal.lfilter([1.0], [1.0, -rho], eps, zi=zi)
    return out


@dataclass(frozen=True)
class SystemSpec:
    """Shape and error characteristics of one synthetic forecast system.

    ``missing_years`` drops the system entirely for those years;
    ``member_overrides`` maps a year to a different member count, which
    wins over ``members`` (hindcast archives often grow in recent years).
    """

    name: str
    members: int
    bias: float = 0.0
    dispersion: float = 1.0
    missing_years: tuple[int, ...] = ()
    member_overrides: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("system name must be non-empty")
        if self.members < 0:
            raise ValueError(f"member count must be non-negative, got {self.members}")
        if not self.dispersion > 0.0:
            raise ValueError(f"dispersion must be positive, got {self.dispersion}")
        if not math.isfinite(self.bias):
            raise ValueError(f"bias must be finite, got {self.bias}")
        object.__setattr__(self, "missing_years", tuple(int(y) for y in self.missing_years))
        overrides = tuple((int(y), int(c)) for y, c in self.member_overrides)
        if len({y for y, _ in overrides}) != len(overrides):
            raise ValueError("duplicate member_overrides year")
        if any(c < 0 for _, c in overrides):
            raise ValueError("member_overrides counts must be non-negative")
        object.__setattr__(self, "member_overrides", overrides)

    def members_in(self, year: int) -> int:
        """Member count available for one year."""
        if year in self.missing_years:
            return 0
        for override_year, count in self.member_overrides:
            if override_year == year:
                return count
        return self.members


@dataclass(frozen=True)
class SyntheticConfig:
    """Full recipe for a synthetic dataset.

    ``baselines`` and ``cooling_rates`` are per-location: location i has
    noise-free mean baselines[i] - cooling_rates[i] * (t - 1) on day t.
    ``signal_fraction`` is the share of anomaly variance common to the
    truth and every member within a (location, year); the remainder is
    idiosyncratic and is what a system's ``dispersion`` factor scales.
    """

    n_locations: int
    n_years: int
    horizon: int
    baselines: tuple[float, ...]
    cooling_rates: tuple[float, ...]
    ar_coeff: float
    noise_sd: float
    systems: tuple[SystemSpec, ...]
    signal_fraction: float = 0.0
    first_year: int = 1993
    init_month: int = 10
    init_day: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "baselines", tuple(float(b) for b in self.baselines))
        object.__setattr__(self, "cooling_rates", tuple(float(r) for r in self.cooling_rates))
        object.__setattr__(self, "systems", tuple(self.systems))
        if self.n_locations < 1:
            raise ValueError(f"n_locations must be at least 1, got {self.n_locations}")
        if self.n_years < 1:
            raise ValueError(f"n_years must be at least 1, got {self.n_years}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if len(self.baselines) != self.n_locations:
            raise ValueError(
                f"baselines must have n_locations={self.n_locations} entries, "
                f"got {len(self.baselines)}"
            )
        if len(self.cooling_rates) != self.n_locations:
            raise ValueError(
                f"cooling_rates must have n_locations={self.n_locations} entries, "
                f"got {len(self.cooling_rates)}"
            )
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ValueError(f"ar_coeff must lie in [0, 1), got {self.ar_coeff}")
        if not self.noise_sd > 0.0:
            raise ValueError(f"noise_sd must be positive, got {self.noise_sd}")
        if not 0.0 <= self.signal_fraction <= 1.0:
            raise ValueError(
                f"signal_fraction must lie in [0, 1], got {self.signal_fraction}"
            )
        names = [s.name for s in self.systems]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate system name in {names}")

    @property
    def years(self) -> range:
        return range(self.first_year, self.first_year + self.n_years)

    @property
    def locations(self) -> LocationSet:
        """Synthetic station set; ids are loc00, loc01, ... in index order."""
        width = max(2, len(str(self.n_locations - 1)))
        return LocationSet(
            Location(f"loc{i:0{width}d}", lon=5.0 + 0.5 * i, lat=58.0 + 0.25 * i)
            for i in range(self.n_locations)
        )

    def location_index(self, location_id: str) -> int:
        width = max(2, len(str(self.n_locations - 1)))
        index = {f"loc{i:0{width}d}": i for i in range(self.n_locations)}
        return index[location_id]


def _check_year(cfg: SyntheticConfig, year: int) -> None:
    if year not in cfg.years:
        raise ValueError(
            f"year {year} outside configured range "
            f"{cfg.first_year}..{cfg.first_year + cfg.n_years - 1}"
        )


def _trend(cfg: SyntheticConfig, idx: int) -> np.ndarray:
    t = np.arange(cfg.horizon, dtype=float)
    return cfg.baselines[idx] - cfg.cooling_rates[idx] * t


def _signal(cfg: SyntheticConfig, location_id: str, year: int):
    lam = cfg.signal_fraction
    if lam == 0.0:
        return 0.0
    rng = spawn_rng(cfg.master_seed, "signal", location_id, year)
    return ar1_series(cfg.ar_coeff, math.sqrt(lam) * cfg.noise_sd, cfg.horizon, rng)


def _idio_sd(cfg: SyntheticConfig) -> float:
    return math.sqrt(1.0 - cfg.signal_fraction) * cfg.noise_sd


def _window(cfg: SyntheticConfig, year: int) -> ForecastWindow:
    return ForecastWindow.for_year(year, cfg.init_month, cfg.init_day, cfg.horizon)


def gen_truth(cfg: SyntheticConfig, location_id: str, year: int) -> DailySeries:
    """Synthetic observed series for one (location, year)."""
    idx = cfg.location_index(location_id)
    _check_year(cfg, year)
    rng = spawn_rng(cfg.master_seed, "truth", location_id, year)
    anomaly = ar1_series(cfg.ar_coeff, _idio_sd(cfg), cfg.horizon, rng)
    values = _trend(cfg, idx) + _signal(cfg, location_id, year) + anomaly
    return DailySeries(location_id, year, _window(cfg, year), values)


def gen_ensemble(
    cfg: SyntheticConfig, location_id: str, year: int
) -> list[EnsembleMemberSeries]:
    """Synthetic members of every system available for one (location, year).

    Each member shares the trend and the year-common signal with the
    truth, adds the system's constant bias, and redraws the idiosyncratic
    anomaly scaled by the system's dispersion factor.
    """
    idx = cfg.location_index(location_id)
    _check_year(cfg, year)
    trend = _trend(cfg, idx)
    sig = _signal(cfg, location_id, year)
    sd = _idio_sd(cfg)
    window = _window(cfg, year)
    entries: list[EnsembleMemberSeries] = []
    for system in cfg.systems:
        for j in range(system.members_in(year)):
            member_id = f"m{j:02d}"
            rng = spawn_rng(cfg.master_seed, "member", system.name, member_id, location_id, year)
            anomaly = system.dispersion * ar1_series(cfg.ar_coeff, sd, cfg.horizon, rng)
            values = trend + system.bias + sig + anomaly
            series = DailySeries(location_id, year, window, values)
            entries.append(EnsembleMemberSeries(system.name, member_id, series))
    return entries


def gen_dataset(cfg: SyntheticConfig) -> tuple[ObservationStore, EnsembleStore]:
    """Generate the full observation store and ensemble store for a config."""
    obs_series: list[DailySeries] = []
    entries: list[EnsembleMemberSeries] = []
    for location_id in cfg.locations.ids:
        for year in cfg.years:
            obs_series.append(gen_truth(cfg, location_id, year))
            entries.extend(gen_ensemble(cfg, location_id, year))
    return ObservationStore(obs_series), EnsembleStore(entries)


# Calibrated by simulation so climatological mean freeze days track the
# targets 8, 10, .., 35 (first 15) and 45, 46.5, .., 70 (last 15): a span
# of early- and late-freeze regimes with a deliberate gap around 40 days.
_PAPERLIKE_BASELINES = (
    3.44, 4.23, 4.90, 5.49, 6.06, 6.61, 7.15, 7.62, 8.16, 8.68,
    9.18, 9.69, 10.17, 10.68, 10.93, 13.44, 13.87, 14.22, 14.68, 15.20,
    15.70, 16.18, 16.70, 17.20, 17.68, 18.19, 18.69, 19.20, 19.46, 19.70,
)


def paperlike_config(master_seed: int = 0) -> SyntheticConfig:
    """Standing fixture: 30 locations, 28 years, four biased systems.

    Member counts mirror a typical multi-system seasonal archive: the
    largest system grows to 51 members from 2017 on, two systems are
    absent 2017-2019, and one small system is always present, so pooled
    ensemble size varies by year (97 / 58 / 123).
    """
    return SyntheticConfig(
        n_locations=30,
        n_years=28,
        horizon=92,
        baselines=_PAPERLIKE_BASELINES,
        cooling_rates=(0.25,) * 30,
        ar_coeff=0.65,
        noise_sd=2.0,
        signal_fraction=0.5,
        systems=(
            SystemSpec(
                "ecmwf",
                members=25,
                bias=2.0,
                dispersion=1.0,
                member_overrides=((2017, 51), (2018, 51), (2019, 51), (2020, 51)),
            ),
            SystemSpec(
                "cmcc", members=40, bias=1.5, dispersion=1.1, missing_years=(2017, 2018, 2019)
            ),
            SystemSpec(
                "metfr", members=25, bias=2.5, dispersion=0.9, missing_years=(2017, 2018, 2019)
            ),
            SystemSpec("ukmo", members=7, bias=2.0, dispersion=1.15),
        ),
        first_year=1993,
        master_seed=master_seed,
    )


def mini_config(master_seed: int = 0) -> SyntheticConfig:
    """Tiny scenario for fast command-line and smoke tests."""
    return SyntheticConfig(
        n_locations=3,
        n_years=6,
        horizon=30,
        baselines=(3.0, 5.0, 7.0),
        cooling_rates=(0.25, 0.25, 0.25),
        ar_coeff=0.5,
        noise_sd=1.5,
        signal_fraction=0.4,
        systems=(
            SystemSpec("alpha", members=9, bias=1.5, dispersion=1.0),
            SystemSpec("beta", members=5, bias=-0.5, dispersion=1.2, missing_years=(1998,)),
        ),
        first_year=1993,
        master_seed=master_seed,
    )


def scenario_paperlike(seed: int = 0) -> tuple[ObservationStore, EnsembleStore]:
    """Generate the paperlike scenario outright."""
    return gen_dataset(paperlike_config(seed))


def scenario_mini(seed: int = 0) -> tuple[ObservationStore, EnsembleStore]:
    """Generate the mini scenario outright."""
    return gen_dataset(mini_config(seed))


SCENARIOS = {
    "paperlike": paperlike_config,
    "mini": mini_config,
}
