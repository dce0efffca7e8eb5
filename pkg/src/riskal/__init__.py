"""Risk-based active learning for regression over populations of degrading assets."""

__version__ = "0.1.0"
