"""Simulator for an autonomous two-bath quantum heat machine whose work
repository is a quantized harmonic-oscillator piston."""

__version__ = "0.1.0"
