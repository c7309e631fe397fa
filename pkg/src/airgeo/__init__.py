"""Geolocation-aware sequence regression for station-based estimation tasks.

Subpackages cover a small explicit-gradient neural core (`nncore`),
coordinate featurizers and contrastively pretrained location encoders
(`geoenc`), synthetic station data and feature pipelines (`spatialdata`),
the windowed Bi-LSTM estimator (`model`), spatial evaluation machinery
(`evalharness`), and report/figure emission (`report`).
"""

__version__ = "0.1.0"
