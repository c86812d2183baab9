"""Desk-scale lab for active test-time adaptation on graph navigation."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
