"""Probabilistic time-to-hard-freeze forecasts from temperature ensembles.

The package turns multi-system ensemble temperature forecasts into
survival curves for the days until the first hard freeze:

- :mod:`freezecast.data` holds daily series and the observation and
  ensemble stores with their CSV formats.
- :mod:`freezecast.grid` matches forecast points to station locations.
- :mod:`freezecast.survival` estimates Kaplan-Meier survival curves from
  horizon-censored event times.
- :mod:`freezecast.postprocess` removes system bias and spread errors by
  member-wise two-stage standardization against leave-one-year-out
  climatologies.
- :mod:`freezecast.verification` scores the resulting curves (Brier,
  CRPS, skill versus climatology) and checks calibration with
  standardized rank histograms.
- :mod:`freezecast.pipeline` wires the stages together; the
  :mod:`freezecast.cli` entry point drives them from the command line.
- :mod:`freezecast.synthetic` generates the reference scenarios used by
  the tests.
"""

from .data import (
    DailySeries,
    EnsembleMemberSeries,
    EnsembleStore,
    ForecastWindow,
    ObservationStore,
    load_ensemble,
    load_observations,
    pooled_members,
    save_ensemble,
    save_observations,
)
from .grid import (
    Location,
    LocationSet,
    haversine_km,
    load_locations,
    match_grids,
    save_locations,
)
from .pipeline import (
    MODEL_CLIMATOLOGY,
    MODEL_POSTPROCESSED,
    MODEL_RAW,
    build_curves,
    event_inputs,
    mean_event_day,
    mean_predicted_days,
    postprocess_all,
)
from .postprocess import (
    ClimatologyStats,
    DailyClimatology,
    SystemPanel,
    obs_climatology,
    postprocess_ensemble,
    restandardize_member,
    standardize_member,
)
from .survival import (
    EventObservation,
    InvariantViolation,
    KaplanMeierEstimator,
    SurvivalCurve,
    climatology_curve,
    forecast_curve,
    km_curve,
    load_curves,
    observed_curve,
    save_curves,
    time_to_event,
)
from .synthetic import SCENARIOS, SyntheticConfig, SystemSpec, gen_dataset
from .verification import (
    RankRecord,
    RankSummary,
    ScoreReport,
    crps_event_day,
    event_time_rank_records,
    integrated_brier,
    score_models,
    skill_score,
    summarize_by_location,
    temperature_rank_records,
)

__version__ = "0.1.0"

__all__ = [
    "MODEL_CLIMATOLOGY",
    "MODEL_POSTPROCESSED",
    "MODEL_RAW",
    "SCENARIOS",
    "ClimatologyStats",
    "DailyClimatology",
    "DailySeries",
    "EnsembleMemberSeries",
    "EnsembleStore",
    "EventObservation",
    "ForecastWindow",
    "InvariantViolation",
    "KaplanMeierEstimator",
    "Location",
    "LocationSet",
    "ObservationStore",
    "RankRecord",
    "RankSummary",
    "ScoreReport",
    "SurvivalCurve",
    "SyntheticConfig",
    "SystemPanel",
    "SystemSpec",
    "build_curves",
    "climatology_curve",
    "crps_event_day",
    "event_inputs",
    "event_time_rank_records",
    "forecast_curve",
    "gen_dataset",
    "haversine_km",
    "integrated_brier",
    "km_curve",
    "load_curves",
    "load_ensemble",
    "load_locations",
    "load_observations",
    "match_grids",
    "mean_event_day",
    "mean_predicted_days",
    "obs_climatology",
    "observed_curve",
    "pooled_members",
    "postprocess_all",
    "postprocess_ensemble",
    "restandardize_member",
    "save_curves",
    "save_ensemble",
    "save_locations",
    "save_observations",
    "score_models",
    "skill_score",
    "standardize_member",
    "summarize_by_location",
    "temperature_rank_records",
    "time_to_event",
]
