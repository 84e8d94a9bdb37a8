"""Figure rendering for stmpi benchmark CSV files."""

from .data import PlotDataError
from .render import FIGURE_KINDS, PlotSpec, render

__all__ = ["PlotSpec", "PlotDataError", "FIGURE_KINDS", "render"]
