"""Batch orchestration: post-process whole stores and build curve sets.

The per-cell operations in :mod:`freezecast.postprocess` recompute the
system climatology panel from the store on every call. Batch runs reuse
one panel per (system, location) and one observation panel per location,
which changes nothing numerically: the leave-one-year-out statistics come
from the identical panel-masking code path either way, so batch and
per-cell results are bit-identical (asserted in the test suite).

Curve sets are plain dicts keyed (location_id, year, model) with the
model labels used throughout: "obs" outcome step curves, "C" the
leave-one-year-out climatology, "R" the raw ensemble and "P" the
post-processed ensemble.
"""

from __future__ import annotations

import logging

import numpy as np

from .data import EnsembleStore, ObservationStore, pooled_members
from .postprocess import (
    DEFAULT_SIGMA_MIN,
    PostprocessedMember,
    SystemPanel,
    obs_climatology,
    postprocessed_store,
    restandardize_member,
    standardize_member,
)
from .survival import (
    EventObservation,
    SurvivalCurve,
    climatology_curve,
    forecast_curve,
    observed_curve,
    time_to_event,
)
from .verification import OBS_MODEL

logger = logging.getLogger(__name__)

MODEL_CLIMATOLOGY = "C"
MODEL_RAW = "R"
MODEL_POSTPROCESSED = "P"


def postprocess_all(
    store: EnsembleStore,
    obs: ObservationStore,
    *,
    sigma_min: float = DEFAULT_SIGMA_MIN,
    window: int = 0,
) -> EnsembleStore:
    """Post-process every member of every (system, year, location).

    Equivalent to calling the per-cell routine for each (year, location)
    and pooling the results, but with system panels cached per location.
    """
    out: list[PostprocessedMember] = []
    for location_id in store.location_ids:
        panels: dict[str, SystemPanel] = {}
        years = sorted(
            {year for system in store.systems for year in store.years_of(system)}
        )
        for year in years:
            members_by_system = {
                system: store.members_for(system, year, location_id)
                for system in store.systems
            }
            members_by_system = {k: v for k, v in members_by_system.items() if v}
            if not members_by_system:
                continue
            obs_stats = obs_climatology(obs, location_id, exclude_year=year, window=window)
            for system in sorted(members_by_system):
                panel = panels.get(system)
                if panel is None:
                    panel = SystemPanel.from_store(store, system, location_id)
                    panels[system] = panel
                fc_stats = panel.climatology(exclude_year=year, window=window)
                for e in members_by_system[system]:
                    anom = standardize_member(e, fc_stats, sigma_min)
                    out.append(restandardize_member(anom, obs_stats, e))
    logger.info("post-processed %d members", len(out))
    return postprocessed_store(out)


def build_curves(
    obs: ObservationStore,
    raw_store: "EnsembleStore | None" = None,
    pp_store: "EnsembleStore | None" = None,
    *,
    threshold: float = 0.0,
) -> dict[tuple[str, int, str], SurvivalCurve]:
    """Survival curves for every (location, year): outcomes, climatology,
    and one forecast model per store passed in.

    Forecast entries exist only for cells where the store has members.
    """
    curves: dict[tuple[str, int, str], SurvivalCurve] = {}
    for location_id in obs.location_ids:
        for year in obs.years_for(location_id):
            series = obs.get(location_id, year)
            h = series.window.horizon
            curves[(location_id, year, OBS_MODEL)] = observed_curve(series, threshold)
            curves[(location_id, year, MODEL_CLIMATOLOGY)] = climatology_curve(
                obs, location_id, exclude_year=year, threshold=threshold, horizon=h
            )
            for model, store in ((MODEL_RAW, raw_store), (MODEL_POSTPROCESSED, pp_store)):
                if store is None:
                    continue
                members = pooled_members(store, year, location_id)
                if members:
                    curves[(location_id, year, model)] = forecast_curve(
                        members, threshold=threshold, horizon=h
                    )
    return curves


def mean_event_day(curve: SurvivalCurve) -> float:
    """Expected event day implied by a curve, censored mass counted at H.

    E[min(T, H)] = sum of S(t) for t = 0..H-1 for day-valued T >= 1.
    """
    return float(np.sum(curve.values[: curve.horizon]))


def mean_predicted_days(
    curves: dict[tuple[str, int, str], SurvivalCurve], model: str = MODEL_POSTPROCESSED
) -> dict[str, float]:
    """Per-location mean of the expected event day across years, for one model."""
    per_loc: dict[str, list[float]] = {}
    for (location_id, _, m), curve in curves.items():
        if m == model:
            per_loc.setdefault(location_id, []).append(mean_event_day(curve))
    return {loc: float(np.mean(vals)) for loc, vals in sorted(per_loc.items())}


def event_inputs(
    obs: ObservationStore,
    store: EnsembleStore,
    *,
    threshold: float = 0.0,
) -> tuple[
    dict[tuple[str, int], EventObservation],
    dict[tuple[str, int], list[EventObservation]],
]:
    """Event observations for the rank diagnostics, keyed (location, year).

    Member lists pool all systems in store order; cells without members
    get an empty list.
    """
    obs_events: dict[tuple[str, int], EventObservation] = {}
    member_events: dict[tuple[str, int], list[EventObservation]] = {}
    for location_id in obs.location_ids:
        for year in obs.years_for(location_id):
            key = (location_id, year)
            obs_events[key] = time_to_event(obs.get(location_id, year), threshold)
            member_events[key] = [
                time_to_event(m, threshold)
                for m in pooled_members(store, year, location_id)
            ]
    return obs_events, member_events
