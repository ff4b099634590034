"""Semisupervised regression on random dot product graphs with latent positions on a curve."""

__version__ = "0.1.0"
