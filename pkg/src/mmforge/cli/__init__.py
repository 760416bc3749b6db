"""Command line interface for mmforge."""

from mmforge.cli.__cli__ import cli

__all__ = ["cli"]
