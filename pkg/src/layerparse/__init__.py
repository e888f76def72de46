"""Layered graphic-design parsing toolkit: text protocols, rendering, rewards, GRPO, LTA, metrics."""

__version__ = "0.1.0"
