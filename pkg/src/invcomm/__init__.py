"""Costly communication and inventory control via a coordinator POMDP."""
__version__ = "0.1.0"
