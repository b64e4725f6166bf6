"""Distance-based critical node detection for vaccination planning."""

__version__ = "0.1.0"
FORMAT_VERSION = 1
