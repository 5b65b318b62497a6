"""Edit-activity response to mobility shocks."""

__version__ = "0.1.0"
