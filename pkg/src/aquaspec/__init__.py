"""Water-parameter regression from hyperspectral reflectance spectra."""

__version__ = "0.1.0"
