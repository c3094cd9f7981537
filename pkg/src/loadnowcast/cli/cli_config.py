"""
Run configuration of the command line interface.

A run is configured by one flat JSON object. The packaged `config.json`
next to this file holds every key with its default; a user file overrides
any subset of them and command line flags override both. Relative paths
resolve against the directory of the file that names them.
"""

import datetime as dt
import json
import logging
import os
import pprint
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from loadnowcast.core.consts import FILL_POLICIES, HOUR_CONVENTIONS, TEMP_UNITS
from loadnowcast.core.exceptions import ConfigException
from loadnowcast.libs import assert_keys_are_subset
from loadnowcast.libs.libregress.features import ModelSpec
from loadnowcast.libs.libregress.impact import WEIGHTINGS


logger = logging.getLogger(__name__)

default_run_config_path = Path(
    f"{os.path.dirname(os.path.abspath(__file__))}"
).joinpath("config.json")

PATH_KEYS = [
    "holidays_file",
    "daily_file",
    "annual_gdp_file",
    "annual_electricity_file",
]
PATH_LIST_KEYS = ["load_files", "temperature_files"]
COVARIANCES = ["iid", "hac"]


@dataclass(frozen=True)
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """Every input, model and output setting of one run."""

    load_files: tuple[Path, ...]
    """One hourly load CSV per year, concatenated before aggregation."""
    hour_convention: str
    temperature_files: tuple[Path, ...]
    """One or two station files; two are averaged."""
    temperature_unit: str
    holidays_file: Optional[Path]
    """`None` uses the packaged Italian calendar."""
    fill_policy: str
    daily_file: Optional[Path]
    """Canonical daily CSV; when set, commands skip the raw ingestion."""
    start: dt.date
    end: dt.date
    model: int
    covariance: str
    kink_k: float
    hac_max_lag: int
    treatment_year: int
    interaction_weeks: tuple[int, int]
    treatment_weeks: tuple[int, int]
    baseline_weekday: str
    residential_share: float
    residential_uplift: float
    lockdown_months: tuple[int, ...]
    weighting: str
    draws: int
    seed: int
    ci_level: float
    workers: int
    placebo_weeks: tuple[int, int]
    significance: float
    descriptive_years: tuple[int, ...]
    annual_gdp_file: Optional[Path]
    annual_electricity_file: Optional[Path]
    replications: int
    recovery_draws: int
    out_dir: Path

    def __post_init__(self) -> None:
        checks: list[tuple[bool, str]] = [
            (
                self.hour_convention in HOUR_CONVENTIONS,
                f"hour_convention must be one of {list(HOUR_CONVENTIONS)}",
            ),
            (
                self.temperature_unit in TEMP_UNITS,
                f"temperature_unit must be one of {TEMP_UNITS}",
            ),
            (
                self.fill_policy in FILL_POLICIES,
                f"fill_policy must be one of {FILL_POLICIES}",
            ),
            (len(self.temperature_files) <= 2, "at most two temperature_files"),
            (self.start <= self.end, "start must not be after end"),
            (self.model in (1, 2, 3), "model must be 1, 2 or 3"),
            (
                self.covariance in COVARIANCES,
                f"covariance must be one of {COVARIANCES}",
            ),
            (
                0 < self.residential_share < 100,
                "residential_share must be in (0, 100)",
            ),
            (self.residential_uplift > 0, "residential_uplift must be > 0"),
            (
                all(1 <= m <= 12 for m in self.lockdown_months),
                "lockdown_months must be in 1..12",
            ),
            (
                self.weighting in WEIGHTINGS,
                f"weighting must be one of {WEIGHTINGS}",
            ),
            (self.draws >= 1, "draws must be >= 1"),
            (0 < self.ci_level < 1, "ci_level must be in (0, 1)"),
            (self.workers >= 1, "workers must be >= 1"),
            (0 < self.significance < 1, "significance must be in (0, 1)"),
            (self.replications >= 1, "replications must be >= 1"),
            (self.recovery_draws >= 0, "recovery_draws must be >= 0"),
        ]
        failed = [message for ok, message in checks if not ok]
        if failed:
            raise ConfigException(
                "Invalid run configuration:\n" + pprint.pformat(failed) + "\n"
            )
        # Surfaces bad week ranges, kink or weekday before any command runs.
        self.model_spec()

    def model_spec(self, model: Optional[int] = None) -> ModelSpec:
        """The preset of `model`, or the configured one, with run settings."""
        overrides: dict[str, Any] = {
            "kink_k": self.kink_k,
            "hac_max_lag": self.hac_max_lag,
            "treatment_year": self.treatment_year,
            "interaction_weeks": self.interaction_weeks,
            "treatment_weeks": self.treatment_weeks,
            "baseline_weekday": self.baseline_weekday,
        }
        if self.covariance == "hac":
            overrides["error_model"] = "hac"
        number = self.model if model is None else model
        return ModelSpec.preset(number, **overrides)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with the non-`None` entries of `overrides` applied."""
        applied = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **applied)

    def require(self, path: Optional[Path], what: str) -> Path:
        """
        Returns `path` if it names an existing file.

        Raises
        ------
        ConfigException
        """
        if path is None:
            raise ConfigException(f"No {what} configured\n")
        if not path.is_file():
            raise ConfigException(f"The {what} {path} does not exist\n")
        return path

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation, archived next to the outputs."""
        result = asdict(self)
        for key, value in result.items():
            if isinstance(value, Path):
                result[key] = str(value)
            elif isinstance(value, dt.date):
                result[key] = value.isoformat()
            elif isinstance(value, tuple):
                result[key] = [
                    str(v) if isinstance(v, Path) else v for v in value
                ]
        return result

    def to_json(self, path: Union[str, Path]) -> None:
        """Writes `to_dict` as stable, sorted JSON."""
        with open(path, "wt", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=2, sort_keys=True)
            file.write("\n")


def _read_json_object(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rt", encoding="utf-8") as file:
            config: Any = json.load(file)
    except FileNotFoundError as e:
        raise ConfigException(f"Could not open file at {path}\n") from e
    except json.JSONDecodeError as e:
        raise ConfigException(f"Could not decode JSON at {path}\n") from e
    if not isinstance(config, dict):
        raise ConfigException(f"Configuration at {path} is not a JSON object\n")
    return config


def _resolve(value: Optional[str], base: Path) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base.joinpath(path)


def _resolve_paths(config: dict[str, Any], base: Path) -> dict[str, Any]:
    resolved = dict(config)
    for key in PATH_KEYS + ["out_dir"]:
        if key in resolved:
            resolved[key] = _resolve(resolved[key], base)
    for key in PATH_LIST_KEYS:
        if key in resolved:
            resolved[key] = tuple(_resolve(v, base) for v in resolved[key])
    return resolved


def load_run_config(
    path: Optional[Union[str, Path]] = None, **overrides: Any
) -> RunConfig:
    """
    Reads the packaged defaults, overlays the file at `path` (if any) and
    then the non-`None` `overrides`.

    Raises
    ------
    ConfigException
        If a file cannot be read, has unknown keys or invalid values.
    """
    defaults = _resolve_paths(
        _read_json_object(default_run_config_path), Path.cwd()
    )
    allowed = [f.name for f in fields(RunConfig)]
    merged = dict(defaults)
    if path is not None:
        path = Path(path)
        user = _read_json_object(path)
        try:
            assert_keys_are_subset("Run configuration JSON", user, allowed)
        except ConfigException as e:
            raise ConfigException(
                f"Invalid run configuration at {path}.\n"
                + "Valid JSON but invalid format.\n"
            ) from e
        merged.update(_resolve_paths(user, path.parent.absolute()))
    try:
        merged["start"] = dt.date.fromisoformat(str(merged["start"]))
        merged["end"] = dt.date.fromisoformat(str(merged["end"]))
        for key in ("interaction_weeks", "treatment_weeks", "placebo_weeks"):
            merged[key] = tuple(int(v) for v in merged[key])
        for key in ("lockdown_months", "descriptive_years"):
            merged[key] = tuple(int(v) for v in merged[key])
        for key in ("model", "hac_max_lag", "treatment_year", "draws", "seed"):
            merged[key] = int(merged[key])
        for key in ("workers", "replications", "recovery_draws"):
            merged[key] = int(merged[key])
        for key in ("kink_k", "residential_share", "residential_uplift"):
            merged[key] = float(merged[key])
        for key in ("ci_level", "significance"):
            merged[key] = float(merged[key])
        config = RunConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigException(
            f"Invalid value in run configuration:\n{pprint.pformat(merged)}\n"
        ) from e
    config = config.with_overrides(**overrides)
    logger.info(
        "Loaded run configuration (model %d, seed %d)",
        config.model,
        config.seed,
    )
    return config

