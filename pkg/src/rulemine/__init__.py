"""Batch mining and auditing toolkit for open-source YARA rule ecosystems."""

__version__ = "0.1.0"
