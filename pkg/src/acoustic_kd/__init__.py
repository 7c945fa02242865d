"""Acoustic-image teachers distilled into single-microphone audio classifiers."""

__version__ = "0.1.0"
