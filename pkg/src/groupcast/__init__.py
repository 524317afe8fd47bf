"""LTE group-communication radio-access simulator with index-coded HARQ."""

__version__ = "0.1.0"
