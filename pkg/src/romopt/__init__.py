"""Parametric ROM databases, manifold interpolation and ROM-based optimization."""

from .errors import *  # noqa: F401,F403
from .manifold import ManifoldKind
from .parametric import HDM_SOLVES, AffineParametricSystem, ParamBox, Polynomial

__version__ = "0.1.0"
