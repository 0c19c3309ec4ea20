"""Generate, answer and evaluate existential first-order queries over knowledge graphs."""

__version__ = "0.1.0"
