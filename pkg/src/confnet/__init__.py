"""Confidential multihop network control: simulator and analytics."""

__version__ = "0.1.0"
