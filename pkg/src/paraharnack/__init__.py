"""Numerical laboratory for parabolic systems with critical gradient growth."""
