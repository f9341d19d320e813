"""Incremental, containerized and byte-reproducible LaTeX document builds."""

__version__ = "0.1.0"
