"""Figure rendering for the trajectory tables written by the dynamics engine.

This package never recomputes physics: it reads the '#'-headed CSV tables
(the engine's output interface) and displays selected columns.  Rendering is
a pure function of the input files and the figure specification, so
re-rendering yields byte-identical images.
"""

from .render import FigureSpec, PanelSpec, SchemaMismatchError, SeriesSpec, load_table, render_family

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "PanelSpec",
    "SeriesSpec",
    "SchemaMismatchError",
    "load_table",
    "render_family",
    "__version__",
]
