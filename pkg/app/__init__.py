"""Command-line application for speedchange"""

from .main import run_command

__all__ = ["run_command"]
