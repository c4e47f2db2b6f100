"""Scale-invariant Poisson processes and Dickman approximation."""
__version__ = "0.1.0"
