"""dfsim-adapter: one-way exporters from ML frameworks to the dfsim unified
graph format. Zero runtime coupling to the simulator; the file format is the
whole boundary."""

__version__ = "0.1.0"

from .document import ExtractionReport

__all__ = ["__version__", "ExtractionReport"]
