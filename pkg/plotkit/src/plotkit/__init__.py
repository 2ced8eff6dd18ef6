"""Static figures from the market simulator's CSV/JSON artifacts."""

from .figures import KINDS, FigureSpec, SchemaError, render

__version__ = "0.1.0"
