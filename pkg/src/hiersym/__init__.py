"""Hierarchical symmetry, matching and array constraint extraction for analog netlists."""

__version__ = "0.1.0"
SCHEMA_VERSION = 1
