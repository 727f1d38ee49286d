"""Divergence-based stability analysis for nonlinear and linear systems."""

__version__ = "0.1.0"
