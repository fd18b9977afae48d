"""Run configuration for the command-line front-end.

A config is a JSON object; every key is optional and unknown keys are
rejected. Example::

    {
      "manifold": "circle",
      "J": 60,
      "weight": {"kind": "gevrey", "s": 1.0},
      "variant": "roumieu",
      "L_grid": {"min": 0.01, "max": 10.0, "points": 73},
      "input": {"builtin": "poisson", "params": {"a": 0.5}},
      "classes": ["gevrey_roumieu", "smooth"],
      "operator": {"name": "multiply", "params": {"g": "cos"}},
      "truncation": {"K": 8, "J": 8}
    }
"""
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from komatsu_spectral.catalog import FAMILIES, OPERATORS
from komatsu_spectral.coeff_space import CLASSES, default_L_grid
from komatsu_spectral.spectral_models import MANIFOLDS
from komatsu_spectral.util import config_hash, read_json
from komatsu_spectral.weights import VARIANTS, WeightSequence


class ConfigError(ValueError):
    """A config file or flag holds an invalid value."""


@dataclass
class WeightConfig:
    kind: str = "gevrey"
    s: Optional[float] = 1.0
    log_values: Optional[List[float]] = None
    values: Optional[List[float]] = None

    def build(self, variant: str) -> WeightSequence:
        if self.kind == "gevrey":
            return WeightSequence.gevrey(self.s, variant)
        if self.values is not None:
            return WeightSequence.from_values(self.values, variant)
        return WeightSequence.tabulated(self.log_values, variant)


@dataclass
class GridConfig:
    min: float = 0.01
    max: float = 10.0
    points: int = 73

    def build(self) -> np.ndarray:
        return default_L_grid(self.min, self.max, self.points)


@dataclass
class InputConfig:
    builtin: Optional[str] = "poisson"
    params: Dict[str, Any] = field(default_factory=lambda: {"a": 0.5})
    sample_file: Optional[str] = None
    coefficient_file: Optional[str] = None


@dataclass
class OperatorConfig:
    name: str = "laplacian"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class TruncationConfig:
    K: int = 8
    J: int = 8


@dataclass
class RunConfig:
    manifold: str = "circle"
    J: int = 60
    quadrature_size: Optional[Union[int, Tuple[int, int]]] = None
    weight: WeightConfig = field(default_factory=WeightConfig)
    variant: str = "roumieu"
    L_grid: GridConfig = field(default_factory=GridConfig)
    tolerance: float = 0.5
    input: InputConfig = field(default_factory=InputConfig)
    classes: List[str] = field(
        default_factory=lambda: ["gevrey_roumieu", "smooth"])
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    out: str = "komatsu_out"
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def build_weight(self) -> WeightSequence:
        return self.weight.build(self.variant)

    def validate(self) -> "RunConfig":
        _check(self.manifold in MANIFOLDS,
               f"manifold must be one of {MANIFOLDS}, got "
               f"{self.manifold!r}")
        _check(self.variant in VARIANTS,
               f"variant must be one of {VARIANTS}, got {self.variant!r}")
        _check(isinstance(self.J, int) and self.J >= 1,
               f"J must be a positive integer, got {self.J!r}")
        if self.quadrature_size is not None:
            sizes = (self.quadrature_size if isinstance(
                self.quadrature_size, (list, tuple)) else
                     [self.quadrature_size])
            _check(all(isinstance(s, int) and s > 0 for s in sizes),
                   f"quadrature_size must be positive integers, got "
                   f"{self.quadrature_size!r}")
        _check(self.weight.kind in ("gevrey", "tabulated"),
               f"weight.kind must be gevrey or tabulated, got "
               f"{self.weight.kind!r}")
        if self.weight.kind == "gevrey":
            _check(self.weight.s is not None and self.weight.s > 0,
                   f"weight.s must be positive, got {self.weight.s!r}")
        else:
            _check(self.weight.log_values is not None
                   or self.weight.values is not None,
                   "tabulated weights need log_values or values")
        _check(0 < self.L_grid.min < self.L_grid.max,
               f"L_grid needs 0 < min < max, got {self.L_grid}")
        _check(self.L_grid.points >= 1, "L_grid.points must be positive")
        _check(self.tolerance > 0, "tolerance must be positive")
        for name in self.classes:
            _check(name in CLASSES,
                   f"unknown class {name!r}; choose from {CLASSES}")
        if self.input.builtin is not None:
            _check(self.input.builtin in FAMILIES,
                   f"unknown builtin {self.input.builtin!r}; choose from "
                   f"{sorted(FAMILIES)}")
        _check(self.operator.name in OPERATORS,
               f"unknown operator {self.operator.name!r}; choose from "
               f"{sorted(OPERATORS)}")
        _check(not (self.operator.name == "derivative"
                    and self.manifold == "sphere2"),
               "operator derivative is defined on circle and torus2 only")
        _check(self.truncation.K >= 1 and self.truncation.J >= 1,
               "truncation K and J must be positive")
        return self


def _check(condition: bool, message: str):
    if not condition:
        raise ConfigError(f"Invalid config: {message}.")


_SECTIONS = {
    "weight": WeightConfig,
    "L_grid": GridConfig,
    "input": InputConfig,
    "operator": OperatorConfig,
    "truncation": TruncationConfig,
}


def _build(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Invalid config: {where} must be an object.")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(
            f"Invalid config: unknown keys {unknown} in {where}.")
    kwargs = {}
    for key, value in data.items():
        if cls is RunConfig and key in _SECTIONS:
            value = _build(_SECTIONS[key], value, key)
        elif key == "quadrature_size" and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    try:
        return _build(RunConfig, data, "config").validate()
    except TypeError as e:
        raise ConfigError(f"Invalid config: {e}") from e


def load_config(path: Optional[str] = None) -> RunConfig:
    """Reads a JSON config through fsspec; ``None`` gives the defaults."""
    if path is None:
        return RunConfig().validate()
    try:
        data = read_json(path)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file {path!r} not found.") from e
    except ValueError as e:
        raise ConfigError(f"Config file {path!r} is not valid JSON: {e}")
    return config_from_dict(data)
