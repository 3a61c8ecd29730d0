"""Stochastic reduction dynamics of electron shelving in a three-level atom."""

from .model import SystemParams, validate_params

__all__ = ["SystemParams", "validate_params"]
__version__ = "0.1.0"
