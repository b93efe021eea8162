"""Out-of-band signaling channel for live-call metadata."""

__version__ = "0.1.0"
