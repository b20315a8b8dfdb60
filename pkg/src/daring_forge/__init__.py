"""Desk-scale human-proxy diffusion training and annotation flywheel."""

__version__ = "0.1.0"
