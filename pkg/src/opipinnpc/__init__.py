"""Payload-aware predictive control for a quadruped rigid-body model."""

__version__ = "0.1.0"
