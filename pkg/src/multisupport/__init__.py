"""Generative imitation-learning workbench for planar multi-support manipulation."""

__version__ = "0.1.0"
