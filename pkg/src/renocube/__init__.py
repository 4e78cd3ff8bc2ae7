"""Numerical laboratory for boundary renormalisation of PAM and Phi^4_3 on the cube."""

__version__ = "0.1.0"
