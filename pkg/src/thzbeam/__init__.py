"""Sub-6GHz to THz channel-factor estimation and beam prediction toolkit."""

__version__ = "0.1.0"
