"""Figure generation over the CSV artifacts written by the qpiston CLI."""

__version__ = "0.1.0"
