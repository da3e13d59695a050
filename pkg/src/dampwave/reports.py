"""CSV and JSON writers for basis dumps, trajectories, censuses and reports.

Floats are written with 17 significant digits and JSON keys are sorted, so a
rerun with the same configuration reproduces every file byte for byte.
"""
import json
from pathlib import Path
from typing import Any, List, Sequence, Tuple, Union

import agate
import numpy as np

from dampwave.block import OrbitCensus
from dampwave.exceptions import RunConfigError
from dampwave.semiflow import Trajectory
from dampwave.spectral import SpectralBasis


TRAJECTORY_COLUMNS = ("t", "Enorm", "Qnorm", "w1_norm", "w2_norm", "phi_functional")
CENSUS_COLUMNS = ("seed_index", "stayed", "exit_time", "final_Enorm", "max_Qnorm")


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _text_table(column_names: Sequence[str], rows: List[Sequence[str]]) -> agate.Table:
    return agate.Table(rows, list(column_names), [agate.Text()] * len(column_names))


def basis_table(basis: SpectralBasis) -> agate.Table:
    columns = ["i", "mu_i"] + [f"x{j:04d}" for j in range(basis.n_grid)]
    rows = [
        [str(i + 1), format_float(mu)] + [format_float(v) for v in basis.eigenvectors[i]]
        for i, mu in enumerate(basis.eigenvalues)
    ]
    return _text_table(columns, rows)


def trajectory_table(trajectory: Trajectory) -> agate.Table:
    data = np.column_stack(
        [
            trajectory.times,
            trajectory.e_norm,
            trajectory.q_norm,
            trajectory.w1_norm,
            trajectory.w2_norm,
            trajectory.phi_functional,
        ]
    )
    return _text_table(TRAJECTORY_COLUMNS, [[format_float(v) for v in row] for row in data])


def census_table(census: OrbitCensus) -> agate.Table:
    rows = [
        [
            str(record.seed_index),
            "true" if record.stayed else "false",
            "" if record.exit_time is None else format_float(record.exit_time),
            format_float(record.final_Enorm),
            format_float(record.max_Qnorm),
        ]
        for record in census.records
    ]
    return _text_table(CENSUS_COLUMNS, rows)


def _plain(value: Any) -> Any:
    if hasattr(value, "to_dict"):
        return _plain(value.to_dict())
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def _flatten(value: Any, prefix: str = "") -> List[Tuple[str, str]]:
    if isinstance(value, dict):
        items: List[Tuple[str, str]] = []
        for key in sorted(value):
            items.extend(_flatten(value[key], f"{prefix}{key}."))
        return items
    if isinstance(value, list):
        return []
    key = prefix[:-1]
    if value is None:
        return [(key, "")]
    if isinstance(value, bool):
        return [(key, "true" if value else "false")]
    if isinstance(value, float):
        return [(key, format_float(value))]
    return [(key, str(value))]


def report_table(report: Any) -> agate.Table:
    """Scalar fields of a report as key/value rows; list-valued fields are left to the JSON file."""
    return _text_table(("key", "value"), [list(item) for item in _flatten(_plain(report))])


def write_csv(table: agate.Table, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(str(path))
    return path


def write_json(report: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(report), indent=2, sort_keys=True) + "\n")
    return path


def read_coefficient_table(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """Read an `x,a` CSV table of coefficient samples."""
    tester = agate.TypeTester(force={"x": agate.Number(), "a": agate.Number()})
    try:
        table = agate.Table.from_csv(str(path), column_types=tester)
    except (OSError, ValueError, agate.exceptions.CastError) as exc:
        raise RunConfigError(f"cannot read coefficient table: {exc}", path=str(path)) from exc
    missing = {"x", "a"} - set(table.column_names)
    if missing:
        raise RunConfigError(
            f"coefficient table is missing column(s) {', '.join(sorted(missing))}", path=str(path)
        )
    if len(table.rows) < 2:
        raise RunConfigError("coefficient table needs at least two rows", path=str(path))
    nodes = np.array([float(row["x"]) for row in table.rows])
    values = np.array([float(row["a"]) for row in table.rows])
    return nodes, values

