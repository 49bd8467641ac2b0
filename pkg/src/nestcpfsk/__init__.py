"""Distributed network-coded CPFSK: code search, super-trellis decoding,
union bounds and Monte Carlo BER sweeps."""

__version__ = "0.1.0"
