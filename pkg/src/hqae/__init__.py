"""Hybrid quantum-classical autoencoder for end-to-end radio links."""

__version__ = "0.1.0"
