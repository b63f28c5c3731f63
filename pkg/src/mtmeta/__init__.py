"""Meta-evaluation of machine-translation metrics against human judgments."""

__version__ = "0.1.0"
