"""Command-line front end wiring the pipeline stages together.

Subcommands: ``synth`` (generate a named synthetic scenario),
``postprocess`` (two-stage standardization of an ensemble CSV),
``forecast`` (survival curves per location/year/model), ``verify``
(Brier/skill scores and rank diagnostics) and ``plotdata`` (tidy CSV for
plotting, optional static SVG).

Every command writes into a run directory named after a hash of its
manifest (command, settings, package version, input digests), so reruns
with identical inputs land in the same place with identical bytes. The
run directory path is printed on stdout as the last line.

Settings come from defaults, then an optional flat ``key = value`` config
file, then flags; later layers win. Exit codes: 0 success, 2 bad
configuration or usage, 3 data errors, 4 violated output invariants.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import __version__
from .data import load_ensemble, load_observations, save_ensemble, save_observations
from .grid import save_locations
from .pipeline import (
    MODEL_CLIMATOLOGY,
    MODEL_POSTPROCESSED,
    build_curves,
    event_inputs,
    mean_predicted_days,
    postprocess_all,
)
from .postprocess import DEFAULT_SIGMA_MIN
from .survival import InvariantViolation, load_curves, save_curves
from .synthetic import SCENARIOS, gen_dataset
from .verification import (
    event_time_rank_records,
    load_bs_curves,
    load_rank_records,
    load_scores,
    save_bs_curves,
    save_bs_table,
    save_rank_records,
    save_rank_summaries,
    save_scores,
    save_year_scores,
    score_models,
    summarize_by_location,
    temperature_rank_records,
    UNDEFINED_SKILL,
)

_CONFIG_KEYS = (
    "obs",
    "ensemble",
    "pp",
    "out",
    "init_date",
    "horizon",
    "threshold",
    "seed",
    "sigma_min",
    "scenario",
    "lead_groups",
)


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of one command invocation."""

    obs: "Path | None"
    ensemble: "Path | None"
    pp: "Path | None"
    out: Path
    init_month: int
    init_day: int
    horizon: int
    threshold: float
    lead_groups: tuple[tuple[int, int], ...]
    sigma_min: float
    seed: int
    scenario: "str | None"


def _parse_config_file(path: Path) -> dict[str, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}") from None
    values: dict[str, str] = {}
    for line_num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}: line {line_num}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise click.UsageError(
                f"{path}: line {line_num}: unknown key {key!r} "
                f"(known: {', '.join(_CONFIG_KEYS)})"
            )
        if key in values:
            raise click.UsageError(f"{path}: line {line_num}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _parse_init_date(text: str) -> tuple[int, int]:
    parts = text.split("-")
    try:
        month, day = (int(p) for p in parts)
        dt.date(2000, month, day)
    except ValueError:
        raise click.UsageError(f"invalid init_date {text!r} (want MM-DD)") from None
    return month, day


def _parse_lead_groups(text: str, horizon: int) -> tuple[tuple[int, int], ...]:
    groups: list[tuple[int, int]] = []
    for part in text.split(","):
        try:
            lo, hi = (int(p) for p in part.strip().split("-"))
        except ValueError:
            raise click.UsageError(
                f"invalid lead group {part.strip()!r} (want LO-HI)"
            ) from None
        if not 1 <= lo <= hi or hi > horizon:
            raise click.UsageError(f"lead group {lo}-{hi} outside 1..{horizon}")
        groups.append((lo, hi))
    ordered = sorted(groups)
    for (alo, ahi), (blo, _) in zip(ordered, ordered[1:]):
        if blo <= ahi:
            raise click.UsageError(f"lead groups {alo}-{ahi} and {blo}-... overlap")
    return tuple(groups)


def _default_lead_groups(horizon: int) -> tuple[tuple[int, int], ...]:
    # split 1..H into up to three near-equal contiguous groups
    parts = min(3, horizon)
    base, rem = divmod(horizon, parts)
    groups = []
    lo = 1
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        groups.append((lo, lo + size - 1))
        lo += size
    return tuple(groups)


def build_run_config(
    config_path: "Path | None" = None,
    *,
    obs: "Path | str | None" = None,
    ensemble: "Path | str | None" = None,
    pp: "Path | str | None" = None,
    out: "Path | str | None" = None,
    init_date: "str | None" = None,
    horizon: "int | None" = None,
    threshold: "float | None" = None,
    seed: "int | None" = None,
    sigma_min: "float | None" = None,
    scenario: "str | None" = None,
    lead_groups: "str | None" = None,
) -> RunConfig:
    """Layer defaults, config-file values, and flag values (flags win)."""
    file_values = _parse_config_file(Path(config_path)) if config_path else {}

    def pick(key: str, flag, convert):
        if flag is not None:
            return flag if convert is None else flag
        if key in file_values:
            try:
                return convert(file_values[key]) if convert else file_values[key]
            except ValueError:
                raise click.UsageError(
                    f"invalid config value for {key}: {file_values[key]!r}"
                ) from None
        return None

    obs = pick("obs", obs, Path)
    ensemble = pick("ensemble", ensemble, Path)
    pp = pick("pp", pp, Path)
    out = pick("out", out, Path)
    init_date = pick("init_date", init_date, str)
    horizon = pick("horizon", horizon, int)
    threshold = pick("threshold", threshold, float)
    seed = pick("seed", seed, int)
    sigma_min = pick("sigma_min", sigma_min, float)
    scenario = pick("scenario", scenario, str)
    lead_groups = pick("lead_groups", lead_groups, str)

    horizon = 92 if horizon is None else horizon
    if horizon < 1:
        raise click.UsageError(f"horizon must be at least 1, got {horizon}")
    init_month, init_day = _parse_init_date(init_date) if init_date else (10, 1)
    sigma_min = DEFAULT_SIGMA_MIN if sigma_min is None else sigma_min
    if not sigma_min > 0:
        raise click.UsageError(f"sigma_min must be positive, got {sigma_min}")
    groups = (
        _parse_lead_groups(lead_groups, horizon)
        if lead_groups
        else _default_lead_groups(horizon)
    )
    return RunConfig(
        obs=Path(obs) if obs else None,
        ensemble=Path(ensemble) if ensemble else None,
        pp=Path(pp) if pp else None,
        out=Path(out) if out else Path("runs"),
        init_month=init_month,
        init_day=init_day,
        horizon=horizon,
        threshold=0.0 if threshold is None else float(threshold),
        lead_groups=groups,
        sigma_min=float(sigma_min),
        seed=0 if seed is None else int(seed),
        scenario=scenario,
    )


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise click.UsageError(f"missing required --{name} (or config key {name})")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _start_run(command: str, cfg: RunConfig, settings: dict, inputs: dict) -> Path:
    """Create the manifest-hashed run directory and write the manifest.

    Inputs are recorded by file name and content digest, never by absolute
    path, so identical data produces identical manifests anywhere.
    """
    lines = [f"command = {command}", f"version = {__version__}"]
    for key, value in settings.items():
        lines.append(f"{key} = {value}")
    for name, path in inputs.items():
        lines.append(f"input.{name} = {Path(path).name}")
        lines.append(f"input.{name}.sha256 = {_digest(Path(path))}")
    manifest = "\n".join(lines) + "\n"
    run_dir = cfg.out / f"run-{hashlib.sha256(manifest.encode()).hexdigest()[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "manifest.txt").write_text(manifest)
    return run_dir


def _guarded(body) -> None:
    try:
        body()
    except click.ClickException:
        raise
    except InvariantViolation as exc:
        click.echo(f"invariant violation: {exc}", err=True)
        sys.exit(4)
    except FileNotFoundError as exc:
        name = exc.filename or exc
        click.echo(f"missing input file: {name}", err=True)
        sys.exit(3)
    except (ValueError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(3)


def _group_text(groups: tuple[tuple[int, int], ...]) -> str:
    return ",".join(f"{lo}-{hi}" for lo, hi in groups)


def common_options(fn):
    for option in reversed(
        [
            click.option(
                "--config",
                "config_path",
                type=click.Path(path_type=Path),
                default=None,
                help="flat key = value config file; flags override it",
            ),
            click.option("--init-date", default=None, help="window start as MM-DD (default 10-01)"),
            click.option("--horizon", type=int, default=None, help="window length in days (default 92)"),
            click.option("--threshold", type=float, default=None, help="freeze threshold in deg C (default 0)"),
            click.option("--seed", type=int, default=None, help="generation / tie-break seed (default 0)"),
            click.option(
                "--out",
                type=click.Path(path_type=Path),
                default=None,
                help="directory to place the run directory under (default runs/)",
            ),
        ]
    ):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Probabilistic days-to-first-hard-freeze forecasting toolkit."""


@main.command()
@common_options
@click.option("--scenario", default=None, help="named synthetic scenario (default paperlike)")
def synth(config_path, init_date, horizon, threshold, seed, out, scenario) -> None:
    """Generate a synthetic scenario's observation/ensemble/location CSVs."""
    cfg = build_run_config(
        config_path,
        init_date=init_date,
        horizon=horizon,
        threshold=threshold,
        seed=seed,
        out=out,
        scenario=scenario,
    )
    name = cfg.scenario or "paperlike"
    if name not in SCENARIOS:
        raise click.UsageError(
            f"unknown scenario {name!r} (choices: {', '.join(sorted(SCENARIOS))})"
        )

    def body():
        syn_cfg = SCENARIOS[name](cfg.seed)
        obs, ens = gen_dataset(syn_cfg)
        run_dir = _start_run("synth", cfg, {"scenario": name, "seed": cfg.seed}, {})
        save_observations(obs, run_dir / "obs.csv")
        save_ensemble(ens, run_dir / "ensemble.csv")
        save_locations(syn_cfg.locations, run_dir / "locations.csv")
        click.echo(run_dir)

    _guarded(body)


@main.command()
@common_options
@click.option("--obs", type=click.Path(path_type=Path), default=None, help="observations CSV")
@click.option("--ensemble", type=click.Path(path_type=Path), default=None, help="raw ensemble CSV")
@click.option("--sigma-min", type=float, default=None, help="sd floor for standardization")
def postprocess(config_path, init_date, horizon, threshold, seed, out, obs, ensemble, sigma_min) -> None:
    """Two-stage member-by-member standardization of an ensemble."""
    cfg = build_run_config(
        config_path,
        obs=obs,
        ensemble=ensemble,
        init_date=init_date,
        horizon=horizon,
        threshold=threshold,
        seed=seed,
        sigma_min=sigma_min,
        out=out,
    )
    _require(cfg, "obs", "ensemble")

    def body():
        obs_store = load_observations(
            cfg.obs, init_month=cfg.init_month, init_day=cfg.init_day, horizon=cfg.horizon
        )
        ens = load_ensemble(cfg.ensemble, horizon=cfg.horizon)
        run_dir = _start_run(
            "postprocess",
            cfg,
            {"horizon": cfg.horizon, "sigma_min": repr(cfg.sigma_min)},
            {"obs": cfg.obs, "ensemble": cfg.ensemble},
        )
        pp = postprocess_all(ens, obs_store, sigma_min=cfg.sigma_min)
        per_system: dict[str, int] = {}
        for (system, _), count in ens.availability().items():
            per_system[system] = per_system.get(system, 0) + count
        for system in sorted(per_system):
            click.echo(f"{system}: {per_system[system]} member-years", err=True)
        save_ensemble(pp, run_dir / "ensemble_pp.csv", system_suffix=":pp")
        click.echo(run_dir)

    _guarded(body)


@main.command()
@common_options
@click.option("--obs", type=click.Path(path_type=Path), default=None, help="observations CSV")
@click.option("--ensemble", type=click.Path(path_type=Path), default=None, help="raw ensemble CSV")
@click.option("--pp", type=click.Path(path_type=Path), default=None, help="post-processed ensemble CSV")
def forecast(config_path, init_date, horizon, threshold, seed, out, obs, ensemble, pp) -> None:
    """Survival curves per (location, year): outcomes, climatology, forecasts."""
    cfg = build_run_config(
        config_path,
        obs=obs,
        ensemble=ensemble,
        pp=pp,
        init_date=init_date,
        horizon=horizon,
        threshold=threshold,
        seed=seed,
        out=out,
    )
    _require(cfg, "obs")

    def body():
        obs_store = load_observations(
            cfg.obs, init_month=cfg.init_month, init_day=cfg.init_day, horizon=cfg.horizon
        )
        raw = load_ensemble(cfg.ensemble, horizon=cfg.horizon) if cfg.ensemble else None
        pp_store = load_ensemble(cfg.pp, horizon=cfg.horizon) if cfg.pp else None
        inputs = {"obs": cfg.obs}
        if cfg.ensemble:
            inputs["ensemble"] = cfg.ensemble
        if cfg.pp:
            inputs["pp"] = cfg.pp
        run_dir = _start_run(
            "forecast",
            cfg,
            {"horizon": cfg.horizon, "threshold": repr(cfg.threshold)},
            inputs,
        )
        curves = build_curves(obs_store, raw_store=raw, pp_store=pp_store, threshold=cfg.threshold)
        save_curves(curves, run_dir / "curves.csv")
        click.echo(run_dir)

    _guarded(body)


@main.command()
@common_options
@click.option("--obs", type=click.Path(path_type=Path), default=None, help="observations CSV")
@click.option("--ensemble", type=click.Path(path_type=Path), default=None, help="raw ensemble CSV")
@click.option("--pp", type=click.Path(path_type=Path), default=None, help="post-processed ensemble CSV")
@click.option("--lead-groups", default=None, help="comma list of LO-HI day ranges")
def verify(config_path, init_date, horizon, threshold, seed, out, obs, ensemble, pp, lead_groups) -> None:
    """Score forecasts against outcomes and emit rank diagnostics."""
    cfg = build_run_config(
        config_path,
        obs=obs,
        ensemble=ensemble,
        pp=pp,
        init_date=init_date,
        horizon=horizon,
        threshold=threshold,
        seed=seed,
        out=out,
        lead_groups=lead_groups,
    )
    _require(cfg, "obs")

    def body():
        obs_store = load_observations(
            cfg.obs, init_month=cfg.init_month, init_day=cfg.init_day, horizon=cfg.horizon
        )
        stores = {}
        if cfg.ensemble:
            stores["raw"] = load_ensemble(cfg.ensemble, horizon=cfg.horizon)
        if cfg.pp:
            stores["pp"] = load_ensemble(cfg.pp, horizon=cfg.horizon)
        inputs = {"obs": cfg.obs}
        if cfg.ensemble:
            inputs["ensemble"] = cfg.ensemble
        if cfg.pp:
            inputs["pp"] = cfg.pp
        run_dir = _start_run(
            "verify",
            cfg,
            {
                "horizon": cfg.horizon,
                "threshold": repr(cfg.threshold),
                "seed": cfg.seed,
                "lead_groups": _group_text(cfg.lead_groups),
            },
            inputs,
        )
        curves = build_curves(
            obs_store,
            raw_store=stores.get("raw"),
            pp_store=stores.get("pp"),
            threshold=cfg.threshold,
        )
        report = score_models(curves)
        save_scores(report, run_dir / "scores.csv")
        save_bs_curves(report, run_dir / "bs_curves.csv")
        save_year_scores(report, run_dir / "year_scores.csv")
        for label, store in stores.items():
            temp_records = temperature_rank_records(
                obs_store, store, cfg.lead_groups, seed=cfg.seed
            )
            save_rank_records(temp_records, run_dir / f"rank_records_{label}.csv")
            save_rank_summaries(
                summarize_by_location(temp_records),
                run_dir / f"rank_summaries_{label}.csv",
            )
            obs_events, member_events = event_inputs(obs_store, store, threshold=cfg.threshold)
            event_records = event_time_rank_records(
                obs_events, member_events, cfg.horizon, seed=cfg.seed
            )
            save_rank_records(event_records, run_dir / f"event_rank_records_{label}.csv")
        click.echo(run_dir)

    _guarded(body)


def _histogram_rows(label: str, records) -> list[list]:
    import numpy as np

    rows: list[list] = []
    by_group: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        by_group.setdefault(rec.lead_group, []).append(rec.r)
    for (lo, hi), values in sorted(by_group.items()):
        counts, edges = np.histogram(values, bins=20, range=(0.0, 1.0))
        for i, count in enumerate(counts):
            rows.append(
                [label, f"{lo}-{hi}", repr(float(edges[i])), repr(float(edges[i + 1])), int(count)]
            )
    return rows


def _write_svg(path: Path, skill_rows, curves, hist_tables, bs_tables) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "freezecast"
    fig, axes = plt.subplots(2, 2, figsize=(11, 8))
    ax_skill, ax_hist, ax_curve, ax_bs = axes.ravel()

    by_model: dict[str, list[tuple[float, float]]] = {}
    for _, model, days, ibss in skill_rows:
        if ibss is not None:
            by_model.setdefault(model, []).append((days, ibss))
    for model in sorted(by_model):
        pts = sorted(by_model[model])
        ax_skill.scatter([p[0] for p in pts], [p[1] for p in pts], s=12, label=model)
    ax_skill.axhline(0.0, lw=0.5, color="k")
    ax_skill.set_xlabel("mean predicted days to freeze")
    ax_skill.set_ylabel("IBSS")
    if by_model:
        ax_skill.legend()

    for label, rows in sorted(hist_tables.items()):
        groups = sorted({row[1] for row in rows})
        rows_of = [row for row in rows if row[1] == groups[0]]
        ax_hist.bar(
            [float(row[2]) for row in rows_of],
            [row[4] for row in rows_of],
            width=0.05,
            align="edge",
            alpha=0.6,
            label=f"{label} {rows_of[0][1]}",
        )
    ax_hist.set_xlabel("standardized rank")
    ax_hist.set_ylabel("count")
    if hist_tables:
        ax_hist.legend()

    if curves:
        loc = sorted({k[0] for k in curves})[0]
        years = sorted({k[1] for k in curves if k[0] == loc})
        year = years[-1]
        for model in sorted({k[2] for k in curves if k[:2] == (loc, year)}):
            curve = curves[(loc, year, model)]
            ax_curve.step(range(curve.horizon + 1), curve.values, where="post", label=model)
        ax_curve.set_title(f"{loc} {year}")
        ax_curve.set_xlabel("day")
        ax_curve.set_ylabel("S(t)")
        ax_curve.legend()

    if bs_tables:
        models = sorted({model for (_, model) in bs_tables})
        for model in models:
            arrays = [arr for (loc, m), arr in sorted(bs_tables.items()) if m == model]
            mean = sum(arrays) / len(arrays)
            ax_bs.plot(range(1, len(mean) + 1), mean, label=model)
        ax_bs.set_xlabel("day")
        ax_bs.set_ylabel("mean BS(t)")
        ax_bs.legend()

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


@main.command()
@common_options
@click.option("--scores", "scores_path", type=click.Path(path_type=Path), required=True, help="scores CSV from verify")
@click.option("--curves", "curves_path", type=click.Path(path_type=Path), required=True, help="curves CSV from forecast")
@click.option("--bs", "bs_path", type=click.Path(path_type=Path), default=None, help="BS(t) CSV from verify")
@click.option("--ranks-raw", type=click.Path(path_type=Path), default=None, help="raw rank records CSV")
@click.option("--ranks-pp", type=click.Path(path_type=Path), default=None, help="post-processed rank records CSV")
@click.option("--svg", is_flag=True, default=False, help="also render a static SVG")
def plotdata(config_path, init_date, horizon, threshold, seed, out, scores_path, curves_path, bs_path, ranks_raw, ranks_pp, svg) -> None:
    """Emit tidy plot-ready CSVs from verify/forecast outputs."""
    cfg = build_run_config(
        config_path,
        init_date=init_date,
        horizon=horizon,
        threshold=threshold,
        seed=seed,
        out=out,
    )
    if svg:
        try:
            import matplotlib  # noqa: F401
        except ImportError:
            raise click.UsageError("--svg needs matplotlib (install the 'plots' extra)")

    def body():
        import csv as _csv

        scores = load_scores(scores_path)
        curves = load_curves(curves_path)
        inputs = {"scores": scores_path, "curves": curves_path}
        rank_inputs = {}
        if ranks_raw:
            rank_inputs["raw"] = ranks_raw
        if ranks_pp:
            rank_inputs["pp"] = ranks_pp
        for label, path in rank_inputs.items():
            inputs[f"ranks_{label}"] = path
        if bs_path:
            inputs["bs"] = bs_path
        run_dir = _start_run("plotdata", cfg, {"svg": svg}, inputs)

        days = mean_predicted_days(curves, MODEL_CLIMATOLOGY)
        days.update(mean_predicted_days(curves, MODEL_POSTPROCESSED))
        skill_rows = []
        for (loc, model), (_, ibss) in sorted(scores.items()):
            if loc in days:
                skill_rows.append((loc, model, days[loc], ibss))
        with (run_dir / "skill_vs_mean_days.csv").open("w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["location_id", "model", "mean_days", "ibss"])
            for loc, model, mean_days, ibss in skill_rows:
                text = UNDEFINED_SKILL if ibss is None else repr(ibss)
                writer.writerow([loc, model, repr(mean_days), text])

        save_curves(curves, run_dir / "survival_panels.csv")

        hist_tables = {}
        if rank_inputs:
            with (run_dir / "rank_histogram.csv").open("w", newline="") as fh:
                writer = _csv.writer(fh)
                writer.writerow(["model", "lead_group", "bin_lo", "bin_hi", "count"])
                for label, path in sorted(rank_inputs.items()):
                    rows = _histogram_rows(label, load_rank_records(path))
                    hist_tables[label] = rows
                    writer.writerows(rows)

        bs_tables = {}
        if bs_path:
            bs_tables = load_bs_curves(bs_path)
            save_bs_table(bs_tables, run_dir / "bs_panel.csv")

        if svg:
            _write_svg(run_dir / "plots.svg", skill_rows, curves, hist_tables, bs_tables)
        click.echo(run_dir)

    _guarded(body)
