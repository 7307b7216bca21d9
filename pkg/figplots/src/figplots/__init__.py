"""Render figures from symbreak CSV/JSON run outputs.

A pure post-processor: it reads the documented CSV schemas and fit/manifest
JSON files, recomputes nothing, and writes deterministic PNG + SVG pairs.
"""

__version__ = "0.1.0"
