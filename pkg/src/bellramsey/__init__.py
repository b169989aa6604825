"""Two-ion entangled-state Ramsey spectroscopy simulator and shift estimators."""

__version__ = "0.1.0"
