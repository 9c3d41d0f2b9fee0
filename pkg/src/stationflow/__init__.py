"""Demand outlier detection for station-based bike-sharing networks.

The toolkit normalises hourly usage curves against a per-terminal
functional-regression baseline, clusters terminals via a
correlation-weighted minimum spanning forest, flags low-depth days with
bootstrap thresholds, and scores cluster-level outliers with a bounded
Beta severity model.
"""

__version__ = "0.1.0"
