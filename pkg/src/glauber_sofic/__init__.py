"""Glauber dynamics and free energy for spin systems on sofic approximations."""

__version__ = "0.1.0"
