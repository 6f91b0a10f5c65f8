"""Batch figure renderer for skipprice study directories."""

from .figures import (
    FigureSpec,
    MissingColumn,
    main,
    ratio_mass_at_least,
    render,
    render_figures,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "MissingColumn",
    "main",
    "ratio_mass_at_least",
    "render",
    "render_figures",
]
