"""Wafer dicing inspection: synthetic wafers, classical chip/street
localization, and a stacked per-level CNN classifier with baselines."""

__version__ = "0.1.0"

from .labels import Label, ChipPosition

__all__ = ["Label", "ChipPosition", "__version__"]
