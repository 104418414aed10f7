"""Deploy-time composition of a frozen actor with a goal-conditioned prior."""

__version__ = "0.1.0"
