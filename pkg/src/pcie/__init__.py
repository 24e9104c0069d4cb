"""Patched channel-integration encoder for multi-step stock forecasting."""

__version__ = "0.1.0"
