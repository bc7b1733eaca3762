"""Calibration diagnostics and proper-score verification of freeze forecasts.

Two families of checks:

* Rank statistics. The observation's standardized rank within the pooled
  ensemble is uniform on [0, 1] for a calibrated system; the mean rank and
  the mean absolute deviance from 0.5 (expected 0.25 under uniformity)
  summarize temperature calibration per lead-time group, and jittered
  event-day ranks do the same for the freeze timing itself.

* Brier scores. BS(t) compares forecast survival probability against the
  observed outcome step curve, averaged over years; averaging BS(t) over
  the horizon gives the integrated Brier score (IBS), which for a single
  year equals the CRPS of the forecast event-day distribution. Skill is
  reported relative to the leave-one-year-out climatology as
  IBSS = (IBS_clim - IBS_model) / IBS_clim.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import EnsembleStore, ObservationStore, pooled_members
from .seeding import spawn_rng
from .survival import EventObservation, InvariantViolation, SurvivalCurve

OBS_MODEL = "obs"
UNDEFINED_SKILL = "undefined (degenerate climatology)"


@dataclass(frozen=True)
class RankRecord:
    """One standardized rank, tagged by where it came from."""

    location_id: str
    year: int
    lead_group: tuple[int, int]
    r: float

    def __post_init__(self) -> None:
        lo, hi = self.lead_group
        if not (1 <= lo <= hi):
            raise ValueError(f"lead group must satisfy 1 <= lo <= hi, got {self.lead_group}")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"standardized rank must lie in [0, 1], got {self.r}")


@dataclass(frozen=True)
class RankSummary:
    """Mean rank and mean absolute deviance from 0.5 over a record set.

    ``count`` is the number of records behind the summary; 0 marks a
    summary re-read from disk, where the count is not stored.
    """

    mean_rank: float
    mean_abs_dev: float
    count: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_rank <= 1.0:
            raise ValueError(f"mean rank must lie in [0, 1], got {self.mean_rank}")
        if not 0.0 <= self.mean_abs_dev <= 0.5:
            raise ValueError(f"mean absolute deviance must lie in [0, 0.5], got {self.mean_abs_dev}")
        if self.count < 0:
            raise ValueError("count must be non-negative")


def standardized_rank(obs_value: float, ensemble_values, rng: np.random.Generator) -> float:
    """Rank of an observation within an M-member ensemble, scaled to [0, 1].

    rank = 1 + #{members below obs} + U with U uniform on {0..#ties}, then
    r = (rank - 1) / M. r = 0 means the observation fell below every
    member, r = 1 above every member.
    """
    values = np.asarray(ensemble_values, dtype=float)
    if values.size == 0:
        raise ValueError("empty ensemble")
    less = int((values < obs_value).sum())
    ties = int((values == obs_value).sum())
    u = int(rng.integers(0, ties + 1))
    return (less + u) / values.size


def temperature_rank_records(
    obs: ObservationStore,
    ensembles: EnsembleStore,
    lead_groups: Sequence[tuple[int, int]],
    seed: int = 0,
) -> list[RankRecord]:
    """Standardized daily-temperature ranks, one record per day in a group.

    Members of all systems are pooled. Days with a missing observation, or
    with no finite member value, are skipped; a member missing a day drops
    out of that day's ensemble only. Tie-break draws come from a stream
    derived per (location, year), with one draw per day of the window, so
    results do not depend on the grouping or on processing order.
    """
    groups = [(int(lo), int(hi)) for lo, hi in lead_groups]
    for lo, hi in groups:
        if not 1 <= lo <= hi:
            raise ValueError(f"lead group must satisfy 1 <= lo <= hi, got {(lo, hi)}")
    records: list[RankRecord] = []
    for loc in obs.location_ids:
        for year in obs.years_for(loc):
            members = pooled_members(ensembles, year, loc)
            if not members:
                continue
            obs_vals = obs.get(loc, year).values
            h = obs_vals.shape[0]
            for lo, hi in groups:
                if hi > h:
                    raise ValueError(f"lead group {(lo, hi)} outside 1..{h}")
            matrix = np.vstack([m.values for m in members])
            if matrix.shape[1] != h:
                raise ValueError(f"member horizon {matrix.shape[1]} does not match obs {h}")
            less = (matrix < obs_vals).sum(axis=0)
            ties = (matrix == obs_vals).sum(axis=0)
            m_eff = np.isfinite(matrix).sum(axis=0)
            rng = spawn_rng(seed, "temp-rank", loc, year)
            u = rng.integers(0, ties + 1)
            valid = np.isfinite(obs_vals) & (m_eff > 0)
            for lo, hi in groups:
                for t in range(lo, hi + 1):
                    if valid[t - 1]:
                        r = float((less[t - 1] + u[t - 1]) / m_eff[t - 1])
                        records.append(RankRecord(loc, year, (lo, hi), r))
    return records


def _jittered_day(event: EventObservation, horizon: int, rng: np.random.Generator) -> float:
    # censored outcomes sort above every within-window event day
    base = event.time if event.event == 1 else horizon
    return base + float(rng.random())


def event_time_rank(
    obs_event: EventObservation,
    member_events: Sequence[EventObservation],
    horizon: int,
    rng: np.random.Generator,
) -> float:
    """Standardized rank of the observed event day within member event days.

    U(0, 1) jitter breaks integer ties; the observation's jitter is drawn
    first, then one per member in order, which pins the draw sequence for
    reproducibility.
    """
    members = list(member_events)
    if not members:
        raise ValueError("empty ensemble")
    obs_val = _jittered_day(obs_event, horizon, rng)
    values = np.array([_jittered_day(e, horizon, rng) for e in members])
    return float((values < obs_val).sum() / values.size)


def event_time_rank_records(
    obs_events: Mapping[tuple[str, int], EventObservation],
    member_events: Mapping[tuple[str, int], Sequence[EventObservation]],
    horizon: int,
    seed: int = 0,
) -> list[RankRecord]:
    """Event-day ranks for every (location, year) with members available."""
    records: list[RankRecord] = []
    for loc, year in sorted(obs_events):
        members = member_events.get((loc, year))
        if not members:
            continue
        rng = spawn_rng(seed, "event-rank", loc, year)
        r = event_time_rank(obs_events[(loc, year)], members, horizon, rng)
        records.append(RankRecord(loc, year, (1, horizon), r))
    return records


def rank_summary(records: Iterable[RankRecord]) -> RankSummary:
    """Mean rank and mean |r - 0.5| over a non-empty record set."""
    rs = np.array([rec.r for rec in records])
    if rs.size == 0:
        raise ValueError("no rank records")
    return RankSummary(float(rs.mean()), float(np.abs(rs - 0.5).mean()), int(rs.size))


def summarize_by_location(
    records: Iterable[RankRecord],
) -> "dict[tuple[str, tuple[int, int]], RankSummary]":
    """One RankSummary per (location, lead group), keys sorted."""
    by: dict[tuple[str, tuple[int, int]], list[RankRecord]] = {}
    for rec in records:
        by.setdefault((rec.location_id, rec.lead_group), []).append(rec)
    return {key: rank_summary(recs) for key, recs in sorted(by.items())}


def _common_years(
    pred: Mapping[int, SurvivalCurve], obs: Mapping[int, SurvivalCurve]
) -> tuple[list[int], int]:
    years = sorted(set(pred) & set(obs))
    if not years:
        raise ValueError("no common years between forecasts and outcomes")
    horizons = {pred[y].horizon for y in years} | {obs[y].horizon for y in years}
    if len(horizons) != 1:
        raise ValueError(f"mixed curve horizons {sorted(horizons)}")
    return years, horizons.pop()


def brier_t(
    pred: Mapping[int, SurvivalCurve], obs: Mapping[int, SurvivalCurve], t: int
) -> float:
    """Brier score at day t, averaged over the years present in both maps."""
    years, h = _common_years(pred, obs)
    if not 1 <= t <= h:
        raise ValueError(f"day index {t} outside 1..{h}")
    return float(np.mean([(obs[y].values[t] - pred[y].values[t]) ** 2 for y in years]))


def brier_curve(
    pred: Mapping[int, SurvivalCurve], obs: Mapping[int, SurvivalCurve]
) -> np.ndarray:
    """BS(t) for t = 1..H as an array (t = 0 is excluded, both curves are 1)."""
    years, _ = _common_years(pred, obs)
    diffs = np.stack([obs[y].values[1:] - pred[y].values[1:] for y in years])
    return (diffs**2).mean(axis=0)


def integrated_brier(
    pred: Mapping[int, SurvivalCurve], obs: Mapping[int, SurvivalCurve]
) -> float:
    """IBS: the unweighted mean of BS(t) over t = 1..H."""
    return float(brier_curve(pred, obs).mean())


def crps_event_day(pred: SurvivalCurve, obs: EventObservation) -> float:
    """CRPS of the forecast event-day distribution against one outcome.

    Computed from the CDF F = 1 - S as the mean over t = 1..H of
    (F(t) - [event occurred by t])^2; algebraically identical to the
    single-year IBS and kept as an independent cross-check.
    """
    h = pred.horizon
    if obs.time > h:
        raise ValueError(f"event time {obs.time} beyond horizon {h}")
    cdf = 1.0 - pred.values[1:]
    t = np.arange(1, h + 1)
    occurred = ((obs.event == 1) & (t >= obs.time)).astype(float)
    return float(np.mean((cdf - occurred) ** 2))


def skill_score(ibs_model: float, ibs_clim: float) -> "float | None":
    """IBSS = (IBS_clim - IBS_model) / IBS_clim; 1 perfect, 0 climatology.

    Returns None when the climatology itself is perfect (IBS_clim = 0), in
    which case no finite skill ratio exists.
    """
    if ibs_model < 0 or ibs_clim < 0:
        raise ValueError("IBS values must be non-negative")
    if ibs_clim == 0.0:
        return None
    return (ibs_clim - ibs_model) / ibs_clim


def year_skill(
    curves: Mapping[tuple[str, int, str], SurvivalCurve],
    year: int,
    model: str,
    climatology_model: str = "C",
) -> "float | None":
    """IBSS for one year, averaging IBS over locations instead of years.

    Only locations carrying the model, the climatology, and the outcome
    for that year enter both averages, so the comparison is paired.
    """
    vals_model: list[float] = []
    vals_clim: list[float] = []
    for loc in sorted({loc for (loc, y, m) in curves if y == year and m == model}):
        obs_curve = curves.get((loc, year, OBS_MODEL))
        clim_curve = curves.get((loc, year, climatology_model))
        if obs_curve is None or clim_curve is None:
            continue
        pred_curve = curves[(loc, year, model)]
        vals_model.append(integrated_brier({year: pred_curve}, {year: obs_curve}))
        vals_clim.append(integrated_brier({year: clim_curve}, {year: obs_curve}))
    if not vals_model:
        raise ValueError(f"no scorable locations for year {year} and model {model!r}")
    return skill_score(float(np.mean(vals_model)), float(np.mean(vals_clim)))


def _check_unit(value: float, what: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvariantViolation(f"{what} must lie in [0, 1], got {value}")


@dataclass(frozen=True, eq=False)
class ScoreReport:
    """Brier-score verification results for a set of forecast models.

    Keyed by (location_id, model) for the per-location fields and by
    (year, model) for the year aggregates; ``ibss`` entries are None where
    the climatology was perfect and skill is undefined.
    """

    horizon: int
    bs: "dict[tuple[str, str], np.ndarray]"
    ibs: "dict[tuple[str, str], float]"
    ibss: "dict[tuple[str, str], float | None]"
    year_ibs: "dict[tuple[int, str], float]"
    year_ibss: "dict[tuple[int, str], float | None]"
    years_used: "dict[tuple[str, str], tuple[int, ...]]"

    def __post_init__(self) -> None:
        for key, arr in self.bs.items():
            if arr.shape != (self.horizon,):
                raise InvariantViolation(f"BS curve for {key} has shape {arr.shape}")
            if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
                raise InvariantViolation(f"BS values for {key} must lie in [0, 1]")
        for key, value in self.ibs.items():
            _check_unit(value, f"IBS for {key}")
        for key, value in self.year_ibs.items():
            _check_unit(value, f"year IBS for {key}")
        for mapping, what in ((self.ibss, "IBSS"), (self.year_ibss, "year IBSS")):
            for key, value in mapping.items():
                if value is not None and value > 1.0:
                    raise InvariantViolation(f"{what} for {key} must not exceed 1, got {value}")


def score_models(
    curves: Mapping[tuple[str, int, str], SurvivalCurve],
    climatology_model: str = "C",
) -> ScoreReport:
    """Score every forecast model in a curve set against the outcomes.

    ``curves`` maps (location_id, year, model) to survival curves, with
    model ``"obs"`` holding the outcome step curves. Each model's scores
    average over the years where both it and the outcome exist; year
    aggregates pair each model with the climatology location by location.
    """
    if not curves:
        raise ValueError("no curves to score")
    horizons = {c.horizon for c in curves.values()}
    if len(horizons) != 1:
        raise ValueError(f"mixed curve horizons {sorted(horizons)}")
    horizon = horizons.pop()

    preds: dict[tuple[str, str], dict[int, SurvivalCurve]] = {}
    outcomes: dict[str, dict[int, SurvivalCurve]] = {}
    for (loc, year, model), c in curves.items():
        if model == OBS_MODEL:
            outcomes.setdefault(loc, {})[year] = c
        else:
            preds.setdefault((loc, model), {})[year] = c

    bs: dict[tuple[str, str], np.ndarray] = {}
    ibs: dict[tuple[str, str], float] = {}
    years_used: dict[tuple[str, str], tuple[int, ...]] = {}
    single: dict[tuple[str, int, str], float] = {}
    for (loc, model), pred in sorted(preds.items()):
        obs_curves = outcomes.get(loc, {})
        years = sorted(set(pred) & set(obs_curves))
        if not years:
            continue
        curve_vals = brier_curve(pred, obs_curves)
        bs[(loc, model)] = curve_vals
        ibs[(loc, model)] = float(curve_vals.mean())
        years_used[(loc, model)] = tuple(years)
        for y in years:
            single[(loc, y, model)] = integrated_brier({y: pred[y]}, {y: obs_curves[y]})

    ibss: dict[tuple[str, str], "float | None"] = {}
    for loc, model in ibs:
        clim = ibs.get((loc, climatology_model))
        if clim is None:
            raise ValueError(f"no {climatology_model!r} scores for location {loc!r}")
        ibss[(loc, model)] = skill_score(ibs[(loc, model)], clim)

    models = sorted({model for _, model in ibs})
    year_ibs: dict[tuple[int, str], float] = {}
    year_ibss: dict[tuple[int, str], "float | None"] = {}
    all_years = sorted({y for (_, y, _) in single})
    for y in all_years:
        for model in models:
            locs = sorted(
                loc
                for (loc, yy, m) in single
                if yy == y and m == model and (loc, y, climatology_model) in single
            )
            if not locs:
                continue
            mean_model = float(np.mean([single[(loc, y, model)] for loc in locs]))
            mean_clim = float(np.mean([single[(loc, y, climatology_model)] for loc in locs]))
            year_ibs[(y, model)] = mean_model
            year_ibss[(y, model)] = skill_score(mean_model, mean_clim)

    return ScoreReport(
        horizon=horizon,
        bs=bs,
        ibs=ibs,
        ibss=ibss,
        year_ibs=year_ibs,
        year_ibss=year_ibss,
        years_used=years_used,
    )


_SCORES_HEADER = ["location_id", "model", "ibs", "ibss"]
_RANK_RECORDS_HEADER = ["location_id", "year", "lead_group", "r"]
_BS_HEADER = ["location_id", "model", "t", "bs"]
_YEAR_SCORES_HEADER = ["year", "model", "ibs", "ibss"]
_RANK_HEADER = ["location_id", "lead_group", "mean_rank", "mean_abs_dev"]


def _format_skill(value: "float | None") -> str:
    return UNDEFINED_SKILL if value is None else repr(float(value))


def _parse_skill(text: str) -> "float | None":
    return None if text == UNDEFINED_SKILL else float(text)


def _read_rows(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise ValueError(f"{path.name}: expected header {','.join(header)!r}, got {got}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path.name}: row {row_num} has {len(row)} fields, expected {len(header)}"
                )
            yield row_num, row


def save_scores(report: ScoreReport, path: "str | Path") -> None:
    """Write per-location IBS/IBSS as ``location_id,model,ibs,ibss`` CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SCORES_HEADER)
        for (loc, model), value in sorted(report.ibs.items()):
            writer.writerow([loc, model, repr(value), _format_skill(report.ibss[(loc, model)])])


def load_scores(path: "str | Path") -> "dict[tuple[str, str], tuple[float, float | None]]":
    path = Path(path)
    out: dict[tuple[str, str], tuple[float, "float | None"]] = {}
    for _, row in _read_rows(path, _SCORES_HEADER):
        out[(row[0], row[1])] = (float(row[2]), _parse_skill(row[3]))
    return out


def save_bs_table(table: "Mapping[tuple[str, str], np.ndarray]", path: "str | Path") -> None:
    """Write BS(t) arrays keyed by (location, model) as long-form CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_BS_HEADER)
        for (loc, model), arr in sorted(table.items()):
            for t in range(1, arr.size + 1):
                writer.writerow([loc, model, t, repr(float(arr[t - 1]))])


def save_bs_curves(report: ScoreReport, path: "str | Path") -> None:
    """Write a report's BS(t) curves as ``location_id,model,t,bs`` CSV."""
    save_bs_table(report.bs, path)


def load_bs_curves(path: "str | Path") -> "dict[tuple[str, str], np.ndarray]":
    path = Path(path)
    rows: dict[tuple[str, str], dict[int, float]] = {}
    for row_num, row in _read_rows(path, _BS_HEADER):
        per = rows.setdefault((row[0], row[1]), {})
        t = int(row[2])
        if t in per:
            raise ValueError(f"{path.name}: row {row_num}: duplicate day {t}")
        per[t] = float(row[3])
    out = {}
    for key, per in rows.items():
        h = max(per)
        if sorted(per) != list(range(1, h + 1)):
            raise ValueError(f"{path.name}: day indices for {key} are not contiguous 1..{h}")
        out[key] = np.array([per[t] for t in range(1, h + 1)])
    return out


def save_year_scores(report: ScoreReport, path: "str | Path") -> None:
    """Write year aggregates as ``year,model,ibs,ibss`` CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_YEAR_SCORES_HEADER)
        for (year, model), value in sorted(report.year_ibs.items()):
            writer.writerow(
                [year, model, repr(value), _format_skill(report.year_ibss[(year, model)])]
            )


def load_year_scores(path: "str | Path") -> "dict[tuple[int, str], tuple[float, float | None]]":
    path = Path(path)
    out: dict[tuple[int, str], tuple[float, "float | None"]] = {}
    for _, row in _read_rows(path, _YEAR_SCORES_HEADER):
        out[(int(row[0]), row[1])] = (float(row[2]), _parse_skill(row[3]))
    return out


def _parse_lead_group(text: str, path: Path, row_num: int) -> tuple[int, int]:
    try:
        lo, hi = (int(part) for part in text.split("-"))
    except ValueError:
        raise ValueError(f"{path.name}: row {row_num}: bad lead group {text!r}") from None
    return lo, hi


def save_rank_records(records: Sequence[RankRecord], path: "str | Path") -> None:
    """Write records as ``location_id,year,lead_group,r``, preserving order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RANK_RECORDS_HEADER)
        for rec in records:
            lo, hi = rec.lead_group
            writer.writerow([rec.location_id, rec.year, f"{lo}-{hi}", repr(rec.r)])


def load_rank_records(path: "str | Path") -> list[RankRecord]:
    path = Path(path)
    out: list[RankRecord] = []
    for row_num, row in _read_rows(path, _RANK_RECORDS_HEADER):
        group = _parse_lead_group(row[2], path, row_num)
        out.append(RankRecord(row[0], int(row[1]), group, float(row[3])))
    return out


def save_rank_summaries(
    summaries: Mapping[tuple[str, tuple[int, int]], RankSummary], path: "str | Path"
) -> None:
    """Write summaries as ``location_id,lead_group,mean_rank,mean_abs_dev``.

    Lead groups serialize as ``lo-hi`` day ranges.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RANK_HEADER)
        for (loc, (lo, hi)), s in sorted(summaries.items()):
            writer.writerow([loc, f"{lo}-{hi}", repr(s.mean_rank), repr(s.mean_abs_dev)])


def load_rank_summaries(
    path: "str | Path",
) -> "dict[tuple[str, tuple[int, int]], RankSummary]":
    path = Path(path)
    out: dict[tuple[str, tuple[int, int]], RankSummary] = {}
    for row_num, row in _read_rows(path, _RANK_HEADER):
        group = _parse_lead_group(row[1], path, row_num)
        out[(row[0], group)] = RankSummary(float(row[2]), float(row[3]), 0)
    return out
