"""Figure generation for filter-learning benchmark records."""

from .figures import FigureSpec, SchemaError, extract_panel_data, render_convergence_figure

__version__ = "0.1.0"

__all__ = ["FigureSpec", "SchemaError", "extract_panel_data", "render_convergence_figure"]
