"""Run configuration and its TOML file format."""

from __future__ import annotations

import logging
import sys
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from os import PathLike
from pathlib import Path
from typing import Any

import numpy as np

from ._characteristic import CHARACTERISTICS
from ._engines import ENGINES
from ._errors import InvalidInputError
from ._fe import DesignVector, Material, PlateModel, build_plate
from ._sqmr import SqmrConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

DEFAULT_ENGINES = ("pm", "adne", "adam", "fn")
DEFAULT_REPETITIONS = 20
FORMATS = ("csv", "json")
DEFAULT_REFERENCE_DENSITY = 1.0

# the nine meshes of the plate timing study
PLATE_GRID: tuple[tuple[int, int], ...] = (
    (20, 10),
    (40, 10),
    (40, 30),
    (60, 50),
    (80, 70),
    (100, 80),
    (120, 100),
    (140, 120),
    (180, 140),
)


@dataclass(frozen=True)
class ModelSpec:
    nx: int = 20
    ny: int = 10
    material: Material = Material()
    densities: tuple[tuple[int, float], ...] = ()

    def build(self) -> tuple[PlateModel, DesignVector]:
        """Return the plate and its design, all ones unless overridden."""
        model = build_plate(self.nx, self.ny, self.material)
        rho = np.ones(model.n_elements)
        for element, value in self.densities:
            if not 0 <= element < model.n_elements:
                raise InvalidInputError(
                    f"density override for element {element} outside "
                    f"0..{model.n_elements - 1}"
                )
            rho[element] = value
        return model, DesignVector(rho)


@dataclass(frozen=True)
class CharacteristicSpec:
    """Characteristic by name and its parameters.

    ``element`` is the element whose strain energy ``mse`` measures. For
    ``mac`` with ``ref_mode_source = "auto"`` the reference is mode
    ``ref_mode`` (default: the analysed mode) of the baseline plate. A
    ``reference_density`` below one instead takes that mode from a copy of
    the plate with the density of ``element`` scaled by it. Any other source
    is a ``.npy`` or text file holding the reference vector.
    """

    name: str = "mac"
    element: int = 0
    ref_mode_source: str = "auto"
    ref_mode: int | None = None
    reference_density: float = DEFAULT_REFERENCE_DENSITY

    def __post_init__(self) -> None:
        if self.name not in CHARACTERISTICS:
            raise InvalidInputError(
                f"unknown characteristic {self.name!r}; "
                f"expected one of {', '.join(CHARACTERISTICS)}"
            )
        if self.element < 0:
            raise InvalidInputError(f"element index must be >= 0, got {self.element}")
        if self.ref_mode is not None and self.ref_mode < 1:
            raise InvalidInputError(f"mode numbers start at 1, got {self.ref_mode}")
        if not 0 < self.reference_density <= 1:
            raise InvalidInputError(
                f"reference density must lie in (0, 1], got {self.reference_density}"
            )

    @property
    def auto_reference(self) -> bool:
        return self.name == "mac" and self.ref_mode_source == "auto"

    def reference_mode(self, mode: int) -> int:
        """Mode used as the MAC reference under ``auto``."""
        return mode if self.ref_mode is None else self.ref_mode


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    mode: int = 1
    characteristic: CharacteristicSpec = field(default_factory=CharacteristicSpec)
    engines: tuple[str, ...] = DEFAULT_ENGINES
    repetitions: int = DEFAULT_REPETITIONS
    sqmr: SqmrConfig = field(default_factory=SqmrConfig)
    output: Path | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if not self.engines:
            raise InvalidInputError("at least one engine is required")
        unknown = [name for name in self.engines if name not in ENGINES]
        if unknown:
            raise InvalidInputError(
                f"unknown engine(s) {', '.join(unknown)}; "
                f"expected a subset of {', '.join(ENGINES)}"
            )
        if len(set(self.engines)) != len(self.engines):
            raise InvalidInputError(f"engines listed twice: {', '.join(self.engines)}")
        if self.repetitions < 1:
            raise InvalidInputError(
                f"repetitions must be at least 1, got {self.repetitions}"
            )
        if self.mode < 1:
            raise InvalidInputError(f"mode numbers start at 1, got {self.mode}")
        if self.format not in FORMATS:
            raise InvalidInputError(
                f"unknown output format {self.format!r}; expected csv or json"
            )

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> RunConfig:
        """Build from the nested tables of a config file."""
        model = data.get("model", {})
        analysis = data.get("analysis", {})
        output = data.get("output", {})
        try:
            material = Material(**model.get("material", {}))
            overrides = model.get("densities", {})
            densities = tuple(
                sorted((int(key), float(value)) for key, value in overrides.items())
            )
            model_spec = ModelSpec(
                nx=int(model.get("nx", ModelSpec.nx)),
                ny=int(model.get("ny", ModelSpec.ny)),
                material=material,
                densities=densities,
            )
            characteristic = CharacteristicSpec(**analysis.get("characteristic", {}))
            sqmr = SqmrConfig(**analysis.get("sqmr", {}))
            path = output.get("path")
            fmt = output.get("format") or _format_from_path(path)
            return cls(
                model=model_spec,
                mode=int(analysis.get("mode", 1)),
                characteristic=characteristic,
                engines=tuple(analysis.get("engines", DEFAULT_ENGINES)),
                repetitions=int(analysis.get("repetitions", DEFAULT_REPETITIONS)),
                sqmr=sqmr,
                output=Path(path) if path else None,
                format=fmt,
            )
        except InvalidInputError:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"invalid configuration: {exc}") from exc

    def with_overrides(self, **changes: Any) -> RunConfig:
        """Return a copy with every non-``None`` override applied."""
        model_changes = {
            key: changes.pop(key) for key in ("nx", "ny") if key in changes
        }
        char_changes = {
            key: changes.pop(key)
            for key in (
                "name",
                "element",
                "ref_mode_source",
                "ref_mode",
                "reference_density",
            )
            if key in changes
        }
        config = self
        model_changes = {k: v for k, v in model_changes.items() if v is not None}
        char_changes = {k: v for k, v in char_changes.items() if v is not None}
        if model_changes:
            config = replace(config, model=replace(config.model, **model_changes))
        if char_changes:
            config = replace(
                config, characteristic=replace(config.characteristic, **char_changes)
            )
        rest = {k: v for k, v in changes.items() if v is not None}
        return replace(config, **rest) if rest else config


def _format_from_path(path: str | None) -> str:
    if path and Path(path).suffix.lower() == ".json":
        return "json"
    return "csv"


def _read_toml(path: str | PathLike[str]) -> dict[str, Any]:
    source = Path(path)
    try:
        with source.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidInputError(f"{source}: {exc}") from exc


def load_config(path: str | PathLike[str]) -> RunConfig:
    """Read a run configuration from a TOML file."""
    config = RunConfig.from_mapping(_read_toml(path))
    logger.debug("loaded configuration from %s: %s", path, config)
    return config


def load_sweep(path: str | PathLike[str]) -> list[RunConfig]:
    """Read a sweep: the base tables plus one run per ``[[sweep]]`` entry.

    Without ``[[sweep]]`` entries the nine plate meshes are swept.
    """
    data = _read_toml(path)
    base = RunConfig.from_mapping(data)
    points: Sequence[Mapping[str, Any]] = data.get("sweep") or [
        {"nx": nx, "ny": ny} for nx, ny in PLATE_GRID
    ]
    configs = []
    for point in points:
        overrides = dict(point)
        if "engines" in overrides:
            overrides["engines"] = tuple(overrides["engines"])
        try:
            configs.append(base.with_overrides(**overrides))
        except TypeError as exc:
            raise InvalidInputError(f"invalid sweep key: {exc}") from exc
    logger.info("sweep of %d runs from %s", len(configs), path)
    return configs
