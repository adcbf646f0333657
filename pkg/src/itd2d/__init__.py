"""Impedance-aided 2-D temperature estimation for cylindrical Li-ion cells."""

__version__ = "0.1.0"
