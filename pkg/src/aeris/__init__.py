"""Multi-horizon PM2.5 forecasting toolkit."""

__version__ = "0.1.0"
