"""Shear-frame spectral toolkit for 2D MHD near Couette flow."""

__version__ = "0.1.0"
