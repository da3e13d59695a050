"""Run configurations shared by the functional tests.

Each fixture is a plain mapping in the layout of a YAML run configuration;
tests copy and adjust them before writing them to disk.
"""
import copy
from typing import Any, Dict

# =============================================================================
# Base configurations
# =============================================================================

# Small enough for a full command in a few seconds
configs__small = {
    "operator": {"n_grid": 200, "n_modes": 6},
    "checks": {
        "n_samples": 400,
        "n_boundary_samples": 200,
        "n_initial": 4,
        "homotopy_s": [0.0],
        "n_trajectories": 2,
    },
    "dynamics": {"T": 2.0},
}

# Resonance at the third eigenvalue
configs__third_eigenvalue = {
    "operator": {"n_grid": 200, "n_modes": 6},
    "dynamics": {"k": 3},
}

# Misspelled key
configs__malformed = {"operator": {"n_grids": 200}}

# Coefficient a(x) = 4 read from a table next to the config file
configs__tabulated = {
    "operator": {"n_grid": 200, "n_modes": 6, "coefficient_table": "coefficient.csv"},
}

tables__constant_four = "x,a\n0.0,4.0\n0.5,4.0\n1.0,4.0\n"


def with_changes(base: Dict[str, Any], **sections: Dict[str, Any]) -> Dict[str, Any]:
    """Deep copy of base with the given sections updated key by key."""
    raw = copy.deepcopy(base)
    for section, values in sections.items():
        raw.setdefault(section, {}).update(values)
    return raw
