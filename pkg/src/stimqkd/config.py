"""Scenario configuration: validated model, YAML round trip and presets."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

__all__ = ["GridConfig", "ScenarioConfig", "load_config", "dump_config", "preset", "PRESETS"]

Scheme = Literal["PM", "StimPDC"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    n: int = Field(512, ge=64)
    # "auto": at least 0.24 m and four times the widest beam along the path
    extent: Union[float, Literal["auto"]] = "auto"

    @field_validator("extent")
    @classmethod
    def _positive_extent(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("extent must be positive or 'auto'")
        return v


class ScenarioConfig(_Strict):
    dimensions: list[int] = Field(default_factory=lambda: [2, 5], min_length=1)
    schemes: list[Scheme] = Field(default_factory=lambda: ["PM", "StimPDC"], min_length=1)
    d_over_r0: list[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0], min_length=1)
    path_length: float = Field(1000.0, gt=0)
    wavelength: float = Field(810e-9, gt=0)
    gamma: float = Field(2.0, gt=0)
    probe_waist: Union[float, Literal["auto"]] = 0.03
    # turbulence aperture D; defaults to the probe diameter 2 w_B
    aperture: float | None = Field(None, gt=0)
    grid: GridConfig = Field(default_factory=GridConfig)
    realizations: int = Field(50, ge=1)
    seed: int = Field(20240917, ge=0)
    zernike_terms: int = Field(172, ge=3)
    segments: Union[int, Literal["auto"]] = 4
    screen_outside: Literal["edge", "zero"] = "edge"
    projection: Literal["exact", "on_axis"] = "exact"
    disc_radius: float | None = Field(None, gt=0)

    @field_validator("dimensions")
    @classmethod
    def _dims(cls, v):
        if any(d < 2 or d > 10 for d in v):
            raise ValueError("dimensions must lie in 2..10")
        return v

    @field_validator("d_over_r0")
    @classmethod
    def _ratios(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("D/r0 values must be non-negative")
        return v

    @field_validator("probe_waist")
    @classmethod
    def _waist(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("probe_waist must be positive or 'auto'")
        return v

    @field_validator("segments")
    @classmethod
    def _segments(cls, v):
        if v != "auto" and v < 1:
            raise ValueError("segments must be >= 1 or 'auto'")
        return v


def _parse(data) -> ScenarioConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        return _parse(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc


def loads_config(text: str) -> ScenarioConfig:
    try:
        return _parse(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


PRESETS = {
    # desk scale: same dimensionless physics on a 512-sample window
    "desk": {},
    "paper": {"grid": {"n": 1200, "extent": 0.24}},
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return _parse({**PRESETS[name], **overrides})
