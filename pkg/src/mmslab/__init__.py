"""Finite-scale laboratory for 1-uniform and 1-regular metric measure spaces."""

__version__ = "0.1.0"

from .core import (
    Ball,
    Correspondence,
    FiniteMMS,
    MMSError,
    PointedMMS,
    ball_measure,
    glue,
    rescale,
    restrict,
    window,
)
from .models import make_R_grid, make_S, make_spider_midpoints, make_star_Sn, make_T

__all__ = [
    "Ball",
    "Correspondence",
    "FiniteMMS",
    "MMSError",
    "PointedMMS",
    "ball_measure",
    "glue",
    "make_R_grid",
    "make_S",
    "make_T",
    "make_spider_midpoints",
    "make_star_Sn",
    "rescale",
    "restrict",
    "window",
]
