"""Planning in reduced state spaces with a learned transition-reliability classifier."""

__version__ = "0.1.0"
