"""Batch figure generation from renocube CSV outputs."""

from .spec import FigureSpec, SchemaError, load_spec
from .render import render

__all__ = ["FigureSpec", "SchemaError", "load_spec", "render"]
