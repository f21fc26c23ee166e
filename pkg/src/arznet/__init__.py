"""Bound-preserving oscillation-eliminating DG schemes for ARZ-type
traffic models on single roads and road networks."""

from .model import PressureLaw, SBarVariant, make_state

__all__ = ["PressureLaw", "SBarVariant", "make_state"]
__version__ = "0.1.0"
