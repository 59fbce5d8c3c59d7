"""plap-lab: barriers, regularization and continuation for singular p-Laplacian systems."""

__version__ = "0.1.0"
