"""Triple lattice sieve toolkit: geometry, product codes, search emulation and cost model."""

__version__ = "0.1.0"
