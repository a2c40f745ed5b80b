"""Numerics for reflected generalized BDSDEs driven by non-homogeneous Levy processes."""

__version__ = "0.1.0"
