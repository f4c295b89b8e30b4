"""Quasiclassical electron trajectories on periodic Fermi surfaces (Novikov problem)."""

__version__ = "0.1.0"
