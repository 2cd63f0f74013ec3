"""Classical and semiclassical scattering through a non-degenerate barrier top."""

__version__ = "0.1.0"
