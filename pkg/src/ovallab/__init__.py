"""Numerical laboratory for the link between one-dimensional Lieb-Thirring
bounds with two bound states and the lowest eigenvalue of
``-d^2/ds^2 + kappa^2`` on closed convex curves of length 2*pi."""

__version__ = "0.1.0"
