"""Prompt-chained campaign agent, simulated cyber range, and evaluation harness."""

__version__ = "0.1.0"
