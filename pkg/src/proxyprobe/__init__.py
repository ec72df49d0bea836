"""Behavioral detection and analysis of delegatecall proxy contracts from transaction traces."""

__version__ = "0.1.0"
