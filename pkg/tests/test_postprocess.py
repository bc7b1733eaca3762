"""Tests for the two-stage member-by-member post-processing."""

import logging
import math

import numpy as np
import pytest

from freezecast.data import (
    DailySeries,
    EnsembleMemberSeries,
    EnsembleStore,
    ForecastWindow,
    ObservationStore,
)
from freezecast.postprocess import (
    DEFAULT_SIGMA_MIN,
    OBS_SOURCE,
    ClimatologyStats,
    DailyClimatology,
    PostprocessedMember,
    SystemPanel,
    forecast_climatology,
    obs_climatology,
    postprocess_ensemble,
    postprocessed_store,
    restandardize_member,
    standardize_member,
)


def mk_series(values, loc="p1", year=2000):
    w = ForecastWindow.for_year(year, horizon=len(values))
    return DailySeries(loc, year, w, np.asarray(values, dtype=float))


def mk_member(system, member, values, loc="p1", year=2000):
    return EnsembleMemberSeries(system, member, mk_series(values, loc, year))


def mk_stats(mean, sd, source="sysA", loc="p1", excluded=None, counts=None):
    mean = np.asarray(mean, dtype=float)
    if counts is None:
        counts = np.full(mean.size, 5)
    return ClimatologyStats(
        location_id=loc,
        source=source,
        excluded_year=excluded,
        mean=mean,
        sd=np.asarray(sd, dtype=float),
        sample_count=np.asarray(counts),
    )


def random_stores(seed=0, n_years=6, horizon=5, systems=(("sysA", 3), ("sysB", 2)), loc="p1"):
    rng = np.random.default_rng(seed)
    years = range(2000, 2000 + n_years)
    obs = ObservationStore([mk_series(rng.normal(2, 3, horizon), loc, y) for y in years])
    entries = [
        mk_member(name, f"m{i}", rng.normal(4, 2, horizon), loc, y)
        for name, m in systems
        for y in years
        for i in range(m)
    ]
    return obs, EnsembleStore(entries)


class TestClimatologyStats:
    def test_valid(self):
        s = mk_stats([1.0, 2.0], [0.5, 0.5])
        assert s.mean.flags.writeable is False
        assert s.horizon == 2

    def test_negative_sd_rejected(self):
        with pytest.raises(ValueError):
            mk_stats([1.0], [-0.1])

    def test_undersized_counts_rejected(self):
        with pytest.raises(ValueError):
            mk_stats([1.0], [0.5], counts=[1])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            mk_stats([1.0, 2.0], [0.5])


class TestDailyClimatology:
    def test_sample_sd_convention(self):
        # sd of {0, 4} with the n-1 denominator is 2*sqrt(2)
        clim = DailyClimatology().fit([[0.0], [4.0]])
        assert clim.mean_[0] == 2.0
        assert clim.scale_[0] == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-15)

    def test_nan_aware_counts(self):
        clim = DailyClimatology().fit([[1.0, 1.0], [np.nan, 2.0], [3.0, 3.0]])
        np.testing.assert_array_equal(clim.counts_, [2, 3])
        assert clim.mean_[0] == 2.0
        assert clim.scale_[0] == pytest.approx(math.sqrt(2.0), abs=1e-15)

    def test_insufficient_samples_names_day(self):
        with pytest.raises(ValueError, match="insufficient samples at day 2"):
            DailyClimatology().fit([[1.0, np.nan], [2.0, 3.0]])

    def test_transform_and_inverse_round_trip(self):
        rng = np.random.default_rng(3)
        X = rng.normal(0, 2, size=(6, 4))
        clim = DailyClimatology().fit(X)
        back = clim.inverse_transform(clim.transform(X))
        np.testing.assert_allclose(back, X, rtol=0, atol=1e-12)

    def test_transform_rejects_degenerate_sd(self):
        X = [[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]
        clim = DailyClimatology().fit(X)
        with pytest.raises(ValueError, match="degenerate climatology sd at day 1"):
            clim.transform([[1.0, 2.0]])

    def test_window_pools_neighboring_days(self):
        X = np.array([[1.0, 3.0], [3.0, 5.0]])
        clim = DailyClimatology(window=1).fit(X)
        pooled = np.array([1.0, 3.0, 3.0, 5.0])
        assert clim.mean_[0] == pooled.mean()
        assert clim.mean_[1] == pooled.mean()
        assert clim.scale_[0] == pytest.approx(pooled.std(ddof=1), abs=1e-15)
        np.testing.assert_array_equal(clim.counts_, [4, 4])

    def test_zero_window_matches_per_day(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(5, 3))
        clim = DailyClimatology(window=0).fit(X)
        np.testing.assert_array_equal(clim.mean_, X.mean(axis=0))
        np.testing.assert_allclose(clim.scale_, X.std(axis=0, ddof=1), rtol=0, atol=1e-15)

    def test_sklearn_params(self):
        clim = DailyClimatology(sigma_min=1e-3, window=2)
        assert clim.get_params() == {"sigma_min": 1e-3, "window": 2}
        out = clim.set_params(window=0).fit([[0.0], [1.0]])
        assert out is clim

    def test_invalid_params_rejected_at_fit(self):
        with pytest.raises(ValueError):
            DailyClimatology(window=-1).fit([[0.0], [1.0]])
        with pytest.raises(ValueError):
            DailyClimatology(sigma_min=-1.0).fit([[0.0], [1.0]])


class TestForecastClimatology:
    def test_two_year_hand_case(self):
        store = EnsembleStore(
            [
                mk_member("sysA", "m0", [1.0, 1.0, 1.0], year=2000),
                mk_member("sysA", "m0", [3.0, 3.0, 3.0], year=2001),
            ]
        )
        stats = forecast_climatology(store, "sysA", "p1", exclude_year=None)
        np.testing.assert_array_equal(stats.mean, [2.0, 2.0, 2.0])
        np.testing.assert_allclose(stats.sd, math.sqrt(2.0), rtol=0, atol=1e-15)
        assert stats.source == "sysA"
        np.testing.assert_array_equal(stats.sample_count, [2, 2, 2])

    def test_exclusion_leaving_single_sample_errors(self):
        store = EnsembleStore(
            [
                mk_member("sysA", "m0", [1.0], year=2000),
                mk_member("sysA", "m0", [3.0], year=2001),
            ]
        )
        with pytest.raises(ValueError, match="insufficient samples at day 1"):
            forecast_climatology(store, "sysA", "p1", exclude_year=2001)

    def test_constant_data(self):
        store = EnsembleStore(
            [
                mk_member("sysA", f"m{i}", [5.0, 5.0], year=y)
                for y in (2000, 2001, 2002)
                for i in range(2)
            ]
        )
        stats = forecast_climatology(store, "sysA", "p1")
        np.testing.assert_array_equal(stats.mean, [5.0, 5.0])
        np.testing.assert_array_equal(stats.sd, [0.0, 0.0])
        np.testing.assert_array_equal(stats.sample_count, [6, 6])

    def test_pools_members_and_years_jointly(self):
        # {1, 3} in year 1 and {5, 7} in year 2 pool to {1,3,5,7}
        store = EnsembleStore(
            [
                mk_member("sysA", "m0", [1.0], year=2000),
                mk_member("sysA", "m1", [3.0], year=2000),
                mk_member("sysA", "m0", [5.0], year=2001),
                mk_member("sysA", "m1", [7.0], year=2001),
            ]
        )
        stats = forecast_climatology(store, "sysA", "p1")
        assert stats.mean[0] == 4.0
        assert stats.sd[0] == pytest.approx(np.std([1, 3, 5, 7], ddof=1), abs=1e-15)

    def test_unknown_system_errors(self):
        _, store = random_stores()
        with pytest.raises(ValueError, match="no data for system"):
            forecast_climatology(store, "nosuch", "p1")

    def test_noop_exclusion_warns(self, caplog):
        _, store = random_stores()
        with caplog.at_level(logging.WARNING):
            forecast_climatology(store, "sysA", "p1", exclude_year=1980)
        assert any("1980" in rec.message for rec in caplog.records)

    def test_loyo_invariant_to_excluded_year_data(self):
        # arbitrary changes to year-y forecasts leave the year-y climatology alone
        obs, store = random_stores(seed=7)
        ref = forecast_climatology(store, "sysA", "p1", exclude_year=2003)
        entries = []
        for e in store:
            if e.series.year == 2003 and e.system == "sysA":
                entries.append(
                    mk_member(e.system, e.member, e.series.values + 100.0, year=2003)
                )
            else:
                entries.append(e)
        perturbed = forecast_climatology(
            EnsembleStore(entries), "sysA", "p1", exclude_year=2003
        )
        assert ref.mean.tobytes() == perturbed.mean.tobytes()
        assert ref.sd.tobytes() == perturbed.sd.tobytes()


class TestObsClimatology:
    def test_hand_case_excluding_middle_year(self):
        obs = ObservationStore(
            [
                mk_series([0.0, 0.0], year=2001),
                mk_series([2.0, 2.0], year=2002),
                mk_series([4.0, 4.0], year=2003),
            ]
        )
        stats = obs_climatology(obs, "p1", exclude_year=2002)
        np.testing.assert_array_equal(stats.mean, [2.0, 2.0])
        np.testing.assert_allclose(stats.sd, 2.0 * math.sqrt(2.0), rtol=0, atol=1e-15)
        assert stats.source == OBS_SOURCE
        assert stats.excluded_year == 2002

    def test_noop_exclusion_warns_and_uses_all_years(self, caplog):
        obs = ObservationStore(
            [mk_series([0.0], year=2001), mk_series([4.0], year=2002)]
        )
        with caplog.at_level(logging.WARNING):
            stats = obs_climatology(obs, "p1", exclude_year=2030)
        assert stats.mean[0] == 2.0
        assert any("2030" in rec.message for rec in caplog.records)

    def test_single_year_after_exclusion_errors(self):
        obs = ObservationStore(
            [mk_series([0.0], year=2001), mk_series([4.0], year=2002)]
        )
        with pytest.raises(ValueError, match="insufficient samples"):
            obs_climatology(obs, "p1", exclude_year=2002)


class TestStandardize:
    def test_centering_identity(self):
        raw = mk_member("sysA", "m0", [1.0, 2.0])
        anom = standardize_member(raw, mk_stats([1.0, 2.0], [2.0, 2.0]))
        np.testing.assert_array_equal(anom, [0.0, 0.0])

    def test_unit_anomaly(self):
        raw = mk_member("sysA", "m0", [3.0, 6.0])
        anom = standardize_member(raw, mk_stats([1.0, 2.0], [2.0, 4.0]))
        np.testing.assert_array_equal(anom, [1.0, 1.0])

    def test_hand_case(self):
        raw = mk_member("sysA", "m0", [3.0, 5.0])
        anom = standardize_member(raw, mk_stats([1.0, 1.0], [2.0, 4.0]))
        np.testing.assert_array_equal(anom, [1.0, 1.0])

    def test_source_mismatch_rejected(self):
        raw = mk_member("sysB", "m0", [3.0, 5.0])
        with pytest.raises(ValueError, match="source"):
            standardize_member(raw, mk_stats([1.0, 1.0], [2.0, 4.0], source="sysA"))

    def test_degenerate_sd_names_day(self):
        raw = mk_member("sysA", "m0", [3.0, 5.0])
        stats = mk_stats([1.0, 1.0], [2.0, 0.0])
        with pytest.raises(ValueError, match="degenerate climatology sd at day 2"):
            standardize_member(raw, stats)


class TestRestandardize:
    def test_zero_anomaly_returns_obs_mean(self):
        raw = mk_member("sysA", "m0", [9.0, 9.0])
        stats = mk_stats([1.5, 2.5], [1.0, 1.0], source=OBS_SOURCE)
        pp = restandardize_member(np.zeros(2), stats, raw)
        np.testing.assert_array_equal(pp.series.values, [1.5, 2.5])
        assert pp.raw is raw
        assert pp.system == "sysA"

    def test_hand_case(self):
        raw = mk_member("sysA", "m0", [9.0, 9.0])
        stats = mk_stats([0.0, 0.0], [2.0, 3.0], source=OBS_SOURCE)
        pp = restandardize_member(np.array([1.0, -1.0]), stats, raw)
        np.testing.assert_array_equal(pp.series.values, [2.0, -3.0])

    def test_requires_obs_source(self):
        raw = mk_member("sysA", "m0", [9.0, 9.0])
        with pytest.raises(ValueError, match="source"):
            restandardize_member(np.zeros(2), mk_stats([0.0, 0.0], [1.0, 1.0]), raw)

    def test_length_mismatch(self):
        raw = mk_member("sysA", "m0", [9.0, 9.0])
        stats = mk_stats([0.0, 0.0], [1.0, 1.0], source=OBS_SOURCE)
        with pytest.raises(ValueError, match="length"):
            restandardize_member(np.zeros(3), stats, raw)

    def test_nonfinite_anomalies_rejected(self):
        raw = mk_member("sysA", "m0", [9.0, 9.0])
        stats = mk_stats([0.0, 0.0], [1.0, 1.0], source=OBS_SOURCE)
        with pytest.raises(ValueError, match="finite"):
            restandardize_member(np.array([1.0, np.nan]), stats, raw)

    def test_composition_is_identity_with_shared_stats(self):
        rng = np.random.default_rng(9)
        stats_fc = mk_stats(rng.normal(0, 1, 4), rng.uniform(0.5, 2, 4), source="sysA")
        stats_obs = mk_stats(stats_fc.mean, stats_fc.sd, source=OBS_SOURCE)
        raw = mk_member("sysA", "m0", rng.normal(0, 3, 4))
        pp = restandardize_member(standardize_member(raw, stats_fc), stats_obs, raw)
        np.testing.assert_allclose(pp.series.values, raw.series.values, rtol=0, atol=1e-12)


class TestPostprocessEnsemble:
    def test_perfect_model_returns_observations(self):
        # each system's lone member *is* the observation series
        obs, _ = random_stores(seed=13, n_years=6, horizon=4)
        entries = [
            mk_member(system, "m0", obs.get("p1", y).values, year=y)
            for system in ("sysA", "sysB")
            for y in obs.years
        ]
        store = EnsembleStore(entries)
        for year in obs.years:
            for pp in postprocess_ensemble(store, obs, year, "p1"):
                np.testing.assert_allclose(
                    pp.series.values, obs.get("p1", year).values, rtol=0, atol=1e-12
                )

    def test_constant_bias_removed(self):
        obs, _ = random_stores(seed=21, n_years=8, horizon=4)
        biases = {"sysA": 2.0, "sysB": -1.0}
        entries = [
            mk_member(system, "m0", obs.get("p1", y).values + bias, year=y)
            for system, bias in biases.items()
            for y in obs.years
        ]
        store = EnsembleStore(entries)
        pooled = []
        for year in obs.years:
            pooled.extend(pp.series.values for pp in postprocess_ensemble(store, obs, year, "p1"))
        obs_mean = np.mean([obs.get("p1", y).values for y in obs.years], axis=0)
        np.testing.assert_allclose(np.mean(pooled, axis=0), obs_mean, rtol=0, atol=1e-9)

    def test_empty_availability_returns_empty_list(self):
        obs, store = random_stores()
        assert postprocess_ensemble(store, obs, 1980, "p1") == []

    def test_member_order_preserved(self):
        obs, store = random_stores(seed=2, systems=(("sysA", 4), ("sysB", 2)))
        pp = postprocess_ensemble(store, obs, 2001, "p1")
        keys = [(m.system, m.member) for m in pp]
        assert keys == sorted(keys)
        assert len(pp) == 6

    def test_rank_preservation_per_day_within_system(self):
        # the affine map is per system, so ordering is preserved system-wise
        obs, store = random_stores(seed=31, n_years=7, horizon=6)
        year = 2002
        pp = postprocess_ensemble(store, obs, year, "p1")
        for system in ("sysA", "sysB"):
            raw = [m.raw.series.values for m in pp if m.system == system]
            cooked = [m.series.values for m in pp if m.system == system]
            for t in range(6):
                raw_order = np.argsort([v[t] for v in raw])
                pp_order = np.argsort([v[t] for v in cooked])
                np.testing.assert_array_equal(raw_order, pp_order)

    def test_output_changes_only_through_own_values(self):
        # perturbing a *different* member of the processed year leaves this
        # member's output bit-identical (climatology excludes that year)
        obs, store = random_stores(seed=4)
        year = 2003
        ref = postprocess_ensemble(store, obs, year, "p1")
        entries = []
        for e in store:
            if (e.system, e.member, e.series.year) == ("sysA", "m1", year):
                entries.append(mk_member(e.system, e.member, e.series.values + 50.0, year=year))
            else:
                entries.append(e)
        perturbed = postprocess_ensemble(EnsembleStore(entries), obs, year, "p1")
        for a, b in zip(ref, perturbed):
            if (a.system, a.member) == ("sysA", "m1"):
                continue
            assert a.series.values.tobytes() == b.series.values.tobytes()

    def test_postprocessed_store_round_trip(self):
        obs, store = random_stores(seed=8)
        pp = postprocess_ensemble(store, obs, 2000, "p1")
        out = postprocessed_store(pp)
        assert len(out) == len(pp)
        assert out.availability() == {("sysA", 2000): 3, ("sysB", 2000): 2}


class TestSystemPanel:
    def test_rows_in_year_then_member_order(self):
        _, store = random_stores(seed=1, n_years=2, systems=(("sysA", 2),))
        panel = SystemPanel.from_store(store, "sysA", "p1")
        assert panel.years == (2000, 2000, 2001, 2001)
        assert panel.members == ("m0", "m1", "m0", "m1")
        assert panel.matrix.shape == (4, 5)

    def test_climatology_matches_direct_computation(self):
        _, store = random_stores(seed=6)
        panel = SystemPanel.from_store(store, "sysA", "p1")
        stats = panel.climatology(exclude_year=2001)
        keep = np.array([y != 2001 for y in panel.years])
        expected = DailyClimatology().fit(panel.matrix[keep])
        assert stats.mean.tobytes() == expected.mean_.tobytes()
        assert stats.sd.tobytes() == expected.scale_.tobytes()

    def test_per_op_and_panel_paths_bitwise_equal(self):
        _, store = random_stores(seed=17)
        panel = SystemPanel.from_store(store, "sysA", "p1")
        for year in (2000, 2002, 2005):
            a = panel.climatology(exclude_year=year)
            b = forecast_climatology(store, "sysA", "p1", exclude_year=year)
            assert a.mean.tobytes() == b.mean.tobytes()
            assert a.sd.tobytes() == b.sd.tobytes()
