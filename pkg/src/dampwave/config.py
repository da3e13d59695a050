from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from dbt_common.dataclass_schema import StrEnum, ValidationError, dbtClassMixin
from mashumaro.jsonschema.annotations import (
    ExclusiveMaximum,
    ExclusiveMinimum,
    Maximum,
    Minimum,
)
from typing_extensions import Annotated

from dampwave.exceptions import RunConfigError
from dampwave.nonlinearities import NAMES


class OutputFormat(StrEnum):
    json = "json"
    csv = "csv"


# Annotated is used by mashumaro for jsonschema generation
@dataclass
class OperatorConfig(dbtClassMixin):
    interval_length: Annotated[float, ExclusiveMinimum(0)] = 1.0
    coefficient: Annotated[float, ExclusiveMinimum(0)] = 1.0
    # CSV with columns x,a; relative paths resolve against the config file
    coefficient_table: Optional[str] = None
    n_grid: Annotated[int, Minimum(16)] = 400
    n_modes: Annotated[int, Minimum(2)] = 8
    ellipticity: Annotated[float, ExclusiveMinimum(0)] = 1e-6


@dataclass
class NonlinearityConfig(dbtClassMixin):
    name: str = "arctan"
    scale: Annotated[float, ExclusiveMinimum(0)] = 1.0
    amplitude: float = 1.0


@dataclass
class DynamicsConfig(dbtClassMixin):
    k: Annotated[int, Minimum(1)] = 1
    c: Annotated[float, ExclusiveMinimum(0)] = 1.0
    alpha: Annotated[float, ExclusiveMinimum(0), ExclusiveMaximum(1)] = 0.5
    dt: Annotated[float, ExclusiveMinimum(0)] = 1e-2
    T: Optional[float] = None
    tol: Annotated[float, ExclusiveMinimum(0)] = 1e-8
    s: Annotated[float, Minimum(0), Maximum(1)] = 1.0


@dataclass
class ChecksConfig(dbtClassMixin):
    seed: Annotated[int, Minimum(0)] = 0
    n_sphere: Annotated[int, Minimum(2)] = 2
    n_samples: Annotated[int, Minimum(1)] = 1000
    r_grid_min: Annotated[float, ExclusiveMinimum(0)] = 1.0
    r_grid_max: Annotated[float, ExclusiveMinimum(0)] = 1e3
    r_grid_points: Annotated[int, Minimum(1)] = 16
    n_boundary_samples: Annotated[int, Minimum(1)] = 1000
    n_initial: Annotated[int, Minimum(1)] = 32
    ball_margin: Annotated[float, Minimum(0)] = 1.0
    homotopy_s: List[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    verify_dt: Annotated[float, ExclusiveMinimum(0)] = 1e-3
    probe: bool = False
    probe_epsilon: Annotated[float, ExclusiveMinimum(0)] = 1e-3
    n_trajectories: Annotated[int, Minimum(1)] = 4


@dataclass
class OutputConfig(dbtClassMixin):
    directory: str = "dampwave_out"
    format: OutputFormat = OutputFormat.json


SECTIONS = {
    "operator": OperatorConfig,
    "nonlinearity": NonlinearityConfig,
    "dynamics": DynamicsConfig,
    "checks": ChecksConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig(dbtClassMixin):
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = "."

    @classmethod
    def parse(cls, raw: Optional[Dict[str, Any]], base_dir: Union[str, Path] = ".") -> "RunConfig":
        raw = {} if raw is None else raw
        _reject_unknown_keys(raw)
        data = dict(raw, base_dir=str(base_dir))
        try:
            cls.validate(data)
            config = cls.from_dict(data)
        except ValidationError as exc:
            location = ".".join(str(part) for part in exc.path)
            raise RunConfigError(f"{location or 'config'}: {exc.message}") from exc
        config.check_semantics()
        return config

    def check_semantics(self) -> None:
        if self.nonlinearity.name not in NAMES:
            raise RunConfigError(
                f"nonlinearity.name: unknown nonlinearity '{self.nonlinearity.name}' "
                f"(expected one of {', '.join(NAMES)})"
            )
        if self.nonlinearity.name == "const_kernel" and self.nonlinearity.amplitude == 0:
            raise RunConfigError("nonlinearity.amplitude: must be nonzero for const_kernel")
        if self.dynamics.k > self.operator.n_modes:
            raise RunConfigError(
                f"dynamics.k: resonant index {self.dynamics.k} exceeds operator.n_modes = {self.operator.n_modes}"
            )
        if self.operator.n_modes > self.operator.n_grid - 2:
            raise RunConfigError("operator.n_modes: must not exceed operator.n_grid - 2")
        if self.dynamics.T is not None and not self.dynamics.T > 0:
            raise RunConfigError("dynamics.T: must be positive")
        if self.checks.r_grid_max <= self.checks.r_grid_min:
            raise RunConfigError("checks.r_grid_max: must exceed checks.r_grid_min")
        if any(not 0.0 <= s <= 1.0 for s in self.checks.homotopy_s):
            raise RunConfigError("checks.homotopy_s: every value must lie in [0, 1]")
        table = self.coefficient_table_path
        if table is not None and not table.is_file():
            raise RunConfigError(f"operator.coefficient_table: file not found: {table}")

    @property
    def coefficient_table_path(self) -> Optional[Path]:
        if self.operator.coefficient_table is None:
            return None
        path = Path(self.operator.coefficient_table)
        return path if path.is_absolute() else Path(self.base_dir) / path


def _reject_unknown_keys(raw: Any) -> None:
    if not isinstance(raw, dict):
        raise RunConfigError("the configuration must be a mapping of sections")
    for section, values in raw.items():
        if section not in SECTIONS:
            raise RunConfigError(
                f"unknown section '{section}' (expected one of {', '.join(SECTIONS)})"
            )
        if values is None:
            continue
        if not isinstance(values, dict):
            raise RunConfigError(f"section '{section}' must be a mapping")
        known = {f.name for f in fields(SECTIONS[section])}
        for key in values:
            if key not in known:
                raise RunConfigError(f"unknown key '{section}.{key}'")


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RunConfigError(f"cannot read configuration file: {exc.strerror}", path=str(path)) from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise RunConfigError(f"YAML syntax error{where}: {problem}", path=str(path)) from exc
    raw = {section: values for section, values in (raw or {}).items() if values is not None} if isinstance(raw, dict) else raw
    return RunConfig.parse(raw, base_dir=path.parent)


def with_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    fmt: Optional[str] = None,
) -> RunConfig:
    """Apply command-line flags on top of the file configuration."""
    if seed is not None:
        if seed < 0:
            raise RunConfigError(f"--seed: must be non-negative, got {seed}")
        config = replace(config, checks=replace(config.checks, seed=seed))
    if out is not None:
        config = replace(config, output=replace(config.output, directory=out))
    if fmt is not None:
        config = replace(config, output=replace(config.output, format=OutputFormat(fmt)))
    return config
