"""Onsager mean field vortex equilibria with a fixed singular point vortex."""

__version__ = "0.1.0"
