"""Probabilistic JSR bounds for black-box switched linear systems."""
from ._accel import backend
from .scenario import BoundsConfig, BoundsReport, analyze
from .sysmodel import SampleSet, SwitchedSystem, Trace

__version__ = "0.1.0"

__all__ = ["BoundsConfig", "BoundsReport", "SampleSet", "SwitchedSystem", "Trace", "analyze", "backend"]
