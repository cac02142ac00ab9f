"""Transfer learning from single-sensor ADL accelerometry to multi-sensor gait classification."""

__version__ = "0.1.0"
