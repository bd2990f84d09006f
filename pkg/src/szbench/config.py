"""
YAML configuration. A file may contain the sections ``scoring``,
``standardize``, ``runner``, ``baseline`` and ``report``; their keys are the
field names of the corresponding configuration classes::

    scoring:
      preictal_tolerance_s: 30
      postictal_tolerance_s: 60
    standardize:
      target_fs: 256
      aliases:
        "EEG T7-REF": T3
      resampler:
        beta: 8.0
    runner:
      max_concurrency: 4
    report:
      precision: 1

Values given on the command line take precedence over the file.
"""
import dataclasses
import typing
from pathlib import Path

import yaml

from .baseline import BaselineConfig
from .errors import ConfigError, ContractError
from .report import ReportOptions
from .runner import RunnerConfig
from .score import ScoringParams
from .standardize import ResamplerConfig, StandardizeConfig

SECTIONS = ("scoring", "standardize", "runner", "baseline", "report")

T = typing.TypeVar("T")


@dataclasses.dataclass(frozen=True)
class Settings:
    scoring: ScoringParams = dataclasses.field(default_factory=ScoringParams)
    standardize: StandardizeConfig = dataclasses.field(default_factory=StandardizeConfig)
    # Without a command template the runner cannot be configured yet.
    runner: typing.Mapping[str, typing.Any] = dataclasses.field(default_factory=dict)
    baseline: BaselineConfig = dataclasses.field(default_factory=BaselineConfig)
    report: ReportOptions = dataclasses.field(default_factory=ReportOptions)


def _field_names(cls) -> typing.Set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(section: str, data: typing.Mapping, allowed: typing.Set[str]) -> None:
    if not isinstance(data, dict):
        msg = f"Section '{section}' must be a mapping, got {type(data).__name__}."
        raise ConfigError(msg)
    unknown = sorted(set(map(str, data)) - allowed)
    if unknown:
        msg = f"Unknown key(s) in section '{section}': {', '.join(unknown)}."
        raise ConfigError(msg)


def _build(cls: typing.Type[T], section: str, data: typing.Mapping) -> T:
    _check_keys(section, data, _field_names(cls))
    try:
        return cls(**data)
    except (ContractError, TypeError) as e:
        msg = f"Invalid section '{section}': {e}"
        raise ConfigError(msg) from e


def settings_from_dict(data: typing.Optional[typing.Mapping[str, typing.Any]]) -> Settings:
    data = data or {}
    _check_keys("<top level>", data, set(SECTIONS))
    standardize = dict(data.get("standardize") or {})
    _check_keys("standardize", standardize, _field_names(StandardizeConfig))
    if "resampler" in standardize:
        standardize["resampler"] = _build(
            ResamplerConfig, "standardize.resampler", standardize["resampler"] or {}
        )
    aliases = standardize.get("aliases") or {}
    if not isinstance(aliases, dict):
        msg = "standardize.aliases must map raw labels to canonical labels."
        raise ConfigError(msg)
    standardize["aliases"] = {str(k): str(v) for k, v in aliases.items()}
    runner = dict(data.get("runner") or {})
    _check_keys("runner", runner, _field_names(RunnerConfig))
    return Settings(
        scoring=_build(ScoringParams, "scoring", data.get("scoring") or {}),
        standardize=_build(StandardizeConfig, "standardize", standardize),
        runner=runner,
        baseline=_build(BaselineConfig, "baseline", data.get("baseline") or {}),
        report=_build(ReportOptions, "report", data.get("report") or {}),
    )


def load_settings(path: typing.Optional[typing.Union[str, Path]] = None) -> Settings:
    """
    Settings from a YAML file; built-in defaults if ``path`` is None.

    :raises ConfigError: if the file is unreadable, not YAML, or contains
        unknown keys or invalid values.
    """
    if path is None:
        return Settings()
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text)
    except OSError as e:
        msg = f"Cannot read configuration {path}: {e}"
        raise ConfigError(msg) from e
    except yaml.YAMLError as e:
        msg = f"Configuration {path} is not valid YAML: {e}"
        raise ConfigError(msg) from e
    if data is not None and not isinstance(data, dict):
        msg = f"Configuration {path} must be a mapping of sections."
        raise ConfigError(msg)
    return settings_from_dict(data)


def runner_config(settings: Settings, **overrides) -> RunnerConfig:
    """
    ``RunnerConfig`` from the file's ``runner`` section and command-line
    values (None means not given).
    """
    values = dict(settings.runner)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunnerConfig(**values)
    except TypeError as e:
        msg = f"Invalid runner configuration: {e}"
        raise ConfigError(msg) from e
