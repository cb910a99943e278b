"""MOSAIC: multi-agent annotation engine for clinical communication coding."""
from __future__ import annotations

__version__ = "0.1.0"
