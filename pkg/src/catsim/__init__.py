"""Multi-particle quantum Arnol'd cat: position autocorrelation and OTOC."""
from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
