"""Offline analysis of internet-wide scan exports for exposed ICS/SCADA devices."""

__version__ = "0.1.0"
