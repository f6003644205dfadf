"""Quantum repeater network simulator under repeater hijacking."""

__version__ = "0.1.0"
