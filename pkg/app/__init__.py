"""Memory Engine - deterministic long-term memory for conversational agents."""

__version__ = "1.0.0"
