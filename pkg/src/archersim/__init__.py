"""Desk-scale community grid: overlay, security, matchmaking, pools and simulation."""

__version__ = "0.1.0"
