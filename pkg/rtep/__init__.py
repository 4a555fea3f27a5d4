"""Robust AC transmission expansion planning under interval injection uncertainty"""

__version__ = "1.0.0"
