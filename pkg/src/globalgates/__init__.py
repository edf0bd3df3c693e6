"""Compiler and exact simulator for lattices of qubits restricted to
translationally invariant global two-qubit gates."""

__version__ = "0.1.0"

from .lattice import (
    ConstraintReport,
    GroupSpec,
    Layout,
    LayoutError,
    builtin_layout,
    circle_sixth,
    grid_sixth,
    grid_slab,
    load_layout,
    parse_layout,
    validate_layout,
    weight_ratio,
)

__all__ = [
    "__version__",
    "ConstraintReport",
    "GroupSpec",
    "Layout",
    "LayoutError",
    "builtin_layout",
    "circle_sixth",
    "grid_sixth",
    "grid_slab",
    "load_layout",
    "parse_layout",
    "validate_layout",
    "weight_ratio",
]
