"""Closed-loop NMES control design: knee plant, RISE controller, NARX identification, GA gain tuning."""

__version__ = "0.1.0"
