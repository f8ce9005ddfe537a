"""Sybil detection for UAV ad-hoc networks by matching sensed and heard neighbours."""

__version__ = "0.1.0"
