"""Noise-resistant semi-supervised node classification on sparsely and noisily labeled graphs."""

__version__ = "0.1.0"
