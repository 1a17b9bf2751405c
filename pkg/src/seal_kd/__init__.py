"""Selective-alignment knowledge distillation for spiking neural networks."""

__version__ = "0.1.0"
