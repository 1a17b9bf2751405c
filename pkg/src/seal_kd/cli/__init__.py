"""Command-line interface for seal-kd."""

from .main import main

__all__ = ['main']
