"""Power extraction from anisotropically driven overdamped Langevin systems."""
__version__ = "0.1.0"
