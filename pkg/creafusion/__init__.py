"""EEG-driven creative fusion: style selection, style transfer, and hue correction."""

from __future__ import annotations

from .creafusion import app, main

__all__ = ["app", "main"]
