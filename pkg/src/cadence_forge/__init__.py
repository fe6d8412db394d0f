"""Dual-stream radar gesture recognition toolkit: range-time maps, cadence
velocity diagrams, augmentation, a small autodiff engine, the CAST network
and evaluation statistics."""

__version__ = "0.1.0"
