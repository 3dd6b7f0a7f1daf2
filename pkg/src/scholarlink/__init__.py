"""Link scholar mentions across Chinese and English web sources."""

__version__ = "0.1.0"
