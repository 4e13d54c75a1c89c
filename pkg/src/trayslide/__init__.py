"""Time-optimal tray transport planning with learned, velocity-conditioned friction."""

__version__ = "0.1.0"
