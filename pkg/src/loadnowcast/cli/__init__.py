"""
Command line interface.

    loadnowcast [--config PATH] [--seed N] [--out DIR] [--workers N]
                [--temp-unit {F,C}] [--log-level LEVEL] COMMAND [options]

Commands: `ingest`, `fit`, `impact`, `placebo`, `report` and `simulate`.
Every command writes its files under the output directory together with the
resolved run configuration. The exit status is 0 on success, 1 for data
errors, 2 for numerical errors and 3 for configuration errors.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from loadnowcast import __version__
from loadnowcast.cli.cli_config import RunConfig, load_run_config
from loadnowcast.core.consts import EXIT_OK, TEMP_UNITS
from loadnowcast.core.exceptions import DataException, LoadNowcastException
from loadnowcast.libs.libload import default_holidays_path
from loadnowcast.libs.libload.ingest import (
    aggregate_daily,
    average_station_temps,
    merge_series,
    parse_holidays,
    parse_hourly_load,
    parse_temperature,
    span_length_note,
)
from loadnowcast.libs.libload.series import (
    DailySeries,
    HolidayCalendar,
    read_daily_csv,
    write_daily_csv,
)
from loadnowcast.libs.libregress.diagnostics import (
    descriptive_exports,
    first_diff_correlation,
    placebo_test,
    read_annual_csv,
    weekend_drop,
)
from loadnowcast.libs.libregress.estimator import (
    FittedModel,
    coefficient_table,
    fit_model,
    side_by_side_table,
)
from loadnowcast.libs.libregress.features import (
    DesignMatrix,
    ModelSpec,
    build_design_matrix,
)
from loadnowcast.libs.libregress.impact import (
    GdpImpact,
    attach_bounds,
    daily_impact,
    default_periods,
    monte_carlo_ci,
    period_report,
    report_frame,
    weekly_impacts,
)
from loadnowcast.libs.libregress.synthetic import (
    SyntheticSpec,
    generate_series,
    recovery_study,
)

logger = logging.getLogger(__name__)

MODEL_JSON_HELP = "A model written by `fit`."


def _write_json(data: Any, path: Path) -> None:
    with open(path, "wt", encoding="utf-8") as file:
        json.dump(data, file, indent=2, sort_keys=True)
        file.write("\n")


def _out_dir(config: RunConfig) -> Path:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    config.to_json(config.out_dir / "run_config.json")
    return config.out_dir


def model_number(spec: ModelSpec) -> int:
    """Which of the three presets `spec` is."""
    if not spec.include_temperature:
        return 2
    return 3 if spec.error_model == "ar1" else 1


def load_holidays(config: RunConfig) -> HolidayCalendar:
    """The configured holiday calendar, or the packaged one."""
    if config.holidays_file is None:
        return parse_holidays(default_holidays_path)
    return parse_holidays(config.require(config.holidays_file, "holiday file"))


def ingest_series(config: RunConfig) -> DailySeries:
    """Parses, aggregates and merges the raw load and temperature files."""
    if not config.load_files:
        raise DataException("No load_files configured\n")
    if not config.temperature_files:
        raise DataException("No temperature_files configured\n")
    records = [
        record
        for path in config.load_files
        for record in parse_hourly_load(
            config.require(path, "load file"), config.hour_convention
        )
    ]
    daily = aggregate_daily(records)
    stations = [
        parse_temperature(
            config.require(path, "temperature file"), config.temperature_unit
        )
        for path in config.temperature_files
    ]
    if len(stations) == 1:
        temps = stations[0]
    else:
        temps = average_station_temps(*stations)
    span = (config.start, config.end)
    return merge_series(daily, temps, span, config.fill_policy)


def load_series(config: RunConfig) -> DailySeries:
    """The canonical daily CSV if configured, else a fresh ingestion."""
    if config.daily_file is not None:
        return read_daily_csv(config.require(config.daily_file, "daily file"))
    return ingest_series(config)


def cmd_ingest(config: RunConfig) -> DailySeries:
    """Writes `daily.csv` and `ingest_report.json`."""
    series = ingest_series(config)
    out = _out_dir(config)
    write_daily_csv(series, out / "daily.csv")
    report = {
        "n": len(series),
        "first": series.first.isoformat(),
        "last": series.last.isoformat(),
        "load_files": [str(p) for p in config.load_files],
        "temperature_files": [str(p) for p in config.temperature_files],
        "hour_convention": config.hour_convention,
        "fill_policy": config.fill_policy,
        "load_mwh": {
            "min": float(series.load.min()),
            "mean": float(series.load.mean()),
            "max": float(series.load.max()),
        },
        "temp_f": {
            "min": float(series.temp.min()),
            "mean": float(series.temp.mean()),
            "max": float(series.temp.max()),
        },
        "span_note": span_length_note(series),
    }
    _write_json(report, out / "ingest_report.json")
    sys.stdout.write(
        f"Ingested {len(series)} days {series.first}..{series.last} -> "
        + f"{out / 'daily.csv'}\n"
    )
    return series


def fit_one(
    series: DailySeries, holidays: HolidayCalendar, spec: ModelSpec
) -> tuple[FittedModel, DesignMatrix]:
    """Builds the design of `spec` and fits it."""
    design = build_design_matrix(series, holidays, spec)
    return fit_model(design), design


def cmd_fit(
    config: RunConfig,
    model: Optional[int] = None,
    dump_design: Optional[Path] = None,
) -> FittedModel:
    """Writes `model{n}.json` and `model{n}_table.txt`."""
    spec = config.model_spec(model)
    series = load_series(config)
    span_length_note(series)
    fitted, design = fit_one(series, load_holidays(config), spec)
    if dump_design is not None:
        design.to_csv(dump_design)
    out = _out_dir(config)
    n = model_number(spec)
    fitted.to_json(out / f"model{n}.json")
    table = coefficient_table(fitted)
    (out / f"model{n}_table.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return fitted


def _model_and_design(
    config: RunConfig, model_json: Optional[Path]
) -> tuple[FittedModel, DesignMatrix, DailySeries]:
    series = load_series(config)
    holidays = load_holidays(config)
    if model_json is None:
        fitted, design = fit_one(series, holidays, config.model_spec())
        return fitted, design, series
    fitted = FittedModel.from_json(config.require(model_json, "model JSON"))
    design = build_design_matrix(series, holidays, fitted.spec)
    return fitted, design, series


def _gdp_row(row: GdpImpact) -> dict[str, Any]:
    result = asdict(row)
    for key, value in result.items():
        if isinstance(value, tuple):
            result[key] = list(value)
    return result


def run_impact(
    config: RunConfig, fitted: FittedModel, design: DesignMatrix, out: Path
) -> list[GdpImpact]:
    """Daily impacts with Monte Carlo bounds plus the period tables."""
    periods = default_periods(design)
    result = monte_carlo_ci(
        fitted,
        design,
        config.draws,
        config.seed,
        periods,
        level=config.ci_level,
        weighting=config.weighting,
        workers=config.workers,
    )
    series = attach_bounds(daily_impact(fitted, design), result)
    series.to_csv(out / "impact.csv")
    report = period_report(
        series,
        periods,
        result.periods,
        r=config.residential_share,
        uplift=config.residential_uplift,
        lockdown_months=config.lockdown_months,
        weighting=config.weighting,
    )
    frame = report_frame(report)
    frame.to_csv(out / "periods.csv", index=False, lineterminator="\n")
    _write_json(
        {
            "model": model_number(fitted.spec),
            "draws": config.draws,
            "seed": config.seed,
            "ci_level": config.ci_level,
            "weighting": config.weighting,
            "periods": [_gdp_row(row) for row in report],
        },
        out / "periods.json",
    )
    weekly_impacts(fitted, design, config.ci_level).to_csv(
        out / "weekly_impacts.csv", index=False, lineterminator="\n"
    )
    sys.stdout.write(frame.to_string(index=False, float_format="%.1f") + "\n")
    return report


def cmd_impact(
    config: RunConfig, model_json: Optional[Path] = None
) -> list[GdpImpact]:
    """Writes `impact.csv`, the period tables and `weekly_impacts.csv`."""
    fitted, design, _ = _model_and_design(config, model_json)
    return run_impact(config, fitted, design, _out_dir(config))


def cmd_placebo(config: RunConfig, model_json: Optional[Path] = None) -> bool:
    """Writes `placebo{n}.json` and returns whether the placebo test passed."""
    fitted, _, _ = _model_and_design(config, model_json)
    report = placebo_test(
        fitted, fitted.spec, config.placebo_weeks, config.significance
    )
    out = _out_dir(config)
    report.to_json(out / f"placebo{model_number(fitted.spec)}.json")
    sys.stdout.write(report.table())
    return report.passed


def cmd_report(config: RunConfig) -> None:
    """
    Fits the three models side by side, runs the impact analysis on the
    AR(1) model, the placebo test on all of them and the descriptive
    exports.
    """
    series = load_series(config)
    span_length_note(series)
    holidays = load_holidays(config)
    out = _out_dir(config)
    fits: dict[int, tuple[FittedModel, DesignMatrix]] = {}
    summary: dict[str, Any] = {"placebo": {}, "weekend_drop_pct": {}}
    for n in (1, 2, 3):
        fitted, design = fit_one(series, holidays, config.model_spec(n))
        fitted.to_json(out / f"model{n}.json")
        fits[n] = (fitted, design)
        placebo = placebo_test(
            fitted, fitted.spec, config.placebo_weeks, config.significance
        )
        placebo.to_json(out / f"placebo{n}.json")
        summary["placebo"][f"model{n}"] = placebo.passed
    table = side_by_side_table({f"Model {n}": fits[n][0] for n in fits})
    (out / "coefficients.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)

    run_impact(config, *fits[3], out)

    present = set(series.years.tolist())
    years = [y for y in config.descriptive_years if y in present]
    if len(years) < len(config.descriptive_years):
        logger.warning(
            "Descriptive years %s not in the series, exporting %s",
            sorted(set(config.descriptive_years) - present),
            years,
        )
    if years:
        descriptive_exports(series, out / "figures", years)
        summary["weekend_drop_pct"] = {
            str(y): weekend_drop(series, y) for y in years
        }
    summary["first_diff_correlation"] = None
    annual = (config.annual_gdp_file, config.annual_electricity_file)
    if None not in annual:
        gdp = read_annual_csv(
            config.require(config.annual_gdp_file, "GDP file"), "gdp"
        )
        load = read_annual_csv(
            config.require(config.annual_electricity_file, "electricity file"),
            "electricity",
        )
        summary["first_diff_correlation"] = first_diff_correlation(gdp, load)
    _write_json(summary, out / "summary.json")


def cmd_simulate(
    config: RunConfig,
    synthetic_config: Optional[Path] = None,
    seed: Optional[int] = None,
) -> None:
    """Writes the synthetic bundle and `recovery.json`."""
    spec = (
        SyntheticSpec()
        if synthetic_config is None
        else SyntheticSpec.from_json(synthetic_config)
    )
    if seed is not None:
        spec = replace(spec, seed=seed)
    holidays = load_holidays(config)
    series, truth = generate_series(spec, holidays)
    out = _out_dir(config)
    bundle = out / "synthetic"
    bundle.mkdir(parents=True, exist_ok=True)
    write_daily_csv(series, bundle / "daily.csv")
    truth.to_csv(bundle / "true_impact.csv")
    _write_json(spec.to_dict(), bundle / "synthetic_config.json")
    summary = recovery_study(
        spec,
        holidays,
        config.replications,
        config.recovery_draws,
        config.workers,
    )
    summary.to_json(out / "recovery.json")
    phi = summary.models["model3"].phi_mean
    sys.stdout.write(
        f"Simulated {len(series)} days; {summary.replications} replications, "
        + f"{len(summary.failures)} failures, mean phi "
        + (f"{phi:.3f}" if phi is not None and np.isfinite(phi) else "n/a")
        + "\n"
    )


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of `main`."""
    parser = argparse.ArgumentParser(
        prog="loadnowcast",
        description="Counterfactual impact of an intervention on daily "
        + "electricity load and GDP.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--config", type=Path, help="Flat JSON run configuration."
    )
    parser.add_argument(
        "--seed", type=int, help="Monte Carlo and simulation seed."
    )
    parser.add_argument("--out", type=Path, help="Output directory.")
    parser.add_argument(
        "--workers", type=int, help="Threads for Monte Carlo draws."
    )
    parser.add_argument(
        "--temp-unit",
        choices=TEMP_UNITS,
        help="Unit of the temperature files (overrides the config).",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level on stderr (default: WARNING).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("ingest", help="Build the canonical daily CSV.")

    fit = commands.add_parser("fit", help="Fit one model and print its table.")
    fit.add_argument("--model", type=int, choices=[1, 2, 3])
    fit.add_argument(
        "--dump-design", type=Path, help="Write the design matrix CSV."
    )

    impact = commands.add_parser(
        "impact", help="Counterfactual impacts and GDP."
    )
    impact.add_argument("--model-json", type=Path, help=MODEL_JSON_HELP)
    impact.add_argument("--model", type=int, choices=[1, 2, 3])

    placebo = commands.add_parser("placebo", help="In-time placebo test.")
    placebo.add_argument("--model-json", type=Path, help=MODEL_JSON_HELP)
    placebo.add_argument("--model", type=int, choices=[1, 2, 3])

    commands.add_parser(
        "report", help="Models 1-3 with impacts, placebo and plot data."
    )

    simulate = commands.add_parser(
        "simulate", help="Synthetic data and recovery study."
    )
    simulate.add_argument("--synthetic-config", type=Path)
    simulate.add_argument("--replications", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one command and returns its exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_run_config(
            args.config,
            seed=args.seed,
            out_dir=args.out,
            workers=args.workers,
            temperature_unit=args.temp_unit,
            model=getattr(args, "model", None),
            replications=getattr(args, "replications", None),
        )
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "fit":
            cmd_fit(config, args.model, args.dump_design)
        elif args.command == "impact":
            cmd_impact(config, args.model_json)
        elif args.command == "placebo":
            cmd_placebo(config, args.model_json)
        elif args.command == "report":
            cmd_report(config)
        elif args.command == "simulate":
            cmd_simulate(config, args.synthetic_config, args.seed)
    except LoadNowcastException as e:
        message = str(e).strip()
        cause = e.__cause__
        while cause is not None:
            message += (
                f"\n  caused by {type(cause).__name__}: {str(cause).strip()}"
            )
            cause = cause.__cause__
        logger.error("%s: %s", type(e).__name__, message)
        return e.exit_code
    return EXIT_OK
