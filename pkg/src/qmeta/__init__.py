"""Meta-learned evolution strategies for learning quantum states."""

__version__ = "0.1.0"
