"""Over-the-air 5G timing acquisition and PTP distribution simulator."""

__version__ = "0.1.0"
