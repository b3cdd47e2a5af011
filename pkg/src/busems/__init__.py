"""Battery/supercapacitor energy management for an electric city bus."""

__version__ = "0.1.0"
