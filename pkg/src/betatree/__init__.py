"""Multiscale beta-number analysis and tree decompositions of point measures."""

from .config import Calibration, GeometryConfig, DESK_CALIBRATION
from .geometry import AffinePlane, Ball
from .measure import CoveringPair, PackingMeasure, PointMeasure

__all__ = [
    "AffinePlane",
    "Ball",
    "Calibration",
    "CoveringPair",
    "GeometryConfig",
    "PackingMeasure",
    "PointMeasure",
    "DESK_CALIBRATION",
]

__version__ = "0.1.0"
