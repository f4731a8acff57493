"""Deterministic gate-energy model of quantum measurement."""
from .errors import (
    AllGatesClosed,
    BoundViolation,
    DimensionMismatch,
    GateMeasureError,
    IndexOutOfRange,
    NonHermitianInput,
    NotAPartition,
)

__version__ = "0.1.0"

__all__ = [
    "AllGatesClosed",
    "BoundViolation",
    "DimensionMismatch",
    "GateMeasureError",
    "IndexOutOfRange",
    "NonHermitianInput",
    "NotAPartition",
]
