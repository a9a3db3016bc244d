"""Multimodal embryo-viability regression over time-lapse video and treatment records."""

__version__ = "0.1.0"
