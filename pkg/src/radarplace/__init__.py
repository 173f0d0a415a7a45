"""Automotive-radar place recognition toolkit.

Pipeline: Doppler-based dynamic point removal -> scan aggregation and
bird's-eye-view rasterization -> spatial-temporal neural descriptor ->
Euclidean retrieval with RCS-histogram re-ranking -> retrieval metrics.
"""

__version__ = "0.1.0"
