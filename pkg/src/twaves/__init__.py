"""Spectral solvers for subsonic travelling waves on a nonzero background
and for the ground states of their long-wave limit."""

from . import kpi, model, nlstw, spectral, transonic  # noqa: F401

__version__ = "0.1.0"
