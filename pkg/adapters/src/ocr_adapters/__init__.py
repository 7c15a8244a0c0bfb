"""Adapter scripts that wrap external OCR/layout/encoder engines.

Each script walks an image directory, runs (or replays) an engine, and emits
one of the patimt interchange files plus a manifest pinning the engine
version. The adapters are pure producers: they write interchange files for
the toolkit to consume and never import it or read its outputs.
"""

__version__ = "0.1.0"
