"""Startup follow-on fundraising prediction with competition and investor-network features."""

__version__ = "0.1.0"
