"""Multilingual spelling correction via multi-teacher sequence distillation."""

__version__ = "0.1.0"
