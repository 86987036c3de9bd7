"""Crowdsensed point-cloud ingestion and registration into a city-scale digital twin."""

from .points import (
    Attribute,
    AttributeSchema,
    CANONICAL_SCHEMA,
    CloudError,
    FRAME_SESSION,
    FRAME_UDT,
    PointCloud,
    PointRecord,
)
from .plyio import estimate_size, parse_ply, write_ply

__all__ = [
    "Attribute",
    "AttributeSchema",
    "CANONICAL_SCHEMA",
    "CloudError",
    "FRAME_SESSION",
    "FRAME_UDT",
    "PointCloud",
    "PointRecord",
    "estimate_size",
    "parse_ply",
    "write_ply",
]

__version__ = "0.1.0"
