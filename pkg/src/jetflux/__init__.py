"""jetflux: exact jet-space variational calculus for PDE conservation laws."""

__version__ = "0.1.0"
