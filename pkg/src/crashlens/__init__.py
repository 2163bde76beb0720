"""Crash-configuration analysis for in-depth powered-two-wheeler crash data."""

__version__ = "0.1.0"
