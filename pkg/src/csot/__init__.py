"""Continuous-domain structural correlation filter tracker."""

__version__ = "0.1.0"
