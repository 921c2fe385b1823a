"""Certified L2-gain bounds and input-bounded invariant sets for nonlinear systems, using continuous piecewise-affine functions."""

__version__ = "0.1.0"
