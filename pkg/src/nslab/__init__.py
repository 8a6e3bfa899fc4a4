"""Periodic 3-D Navier-Stokes laboratory: Beltrami data, critical-space norms, solvers."""

__version__ = "0.1.0"

from nslab.spectral import SpectralField, Trajectory  # noqa: E402,F401
