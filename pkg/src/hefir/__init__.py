"""hefir: a levelled BFV engine and homomorphic CNN inference pipeline."""

__version__ = "0.1.0"
