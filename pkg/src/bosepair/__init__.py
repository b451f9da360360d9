"""Mean-field plus pair-excitation dynamics for interacting bosons."""

__version__ = "0.1.0"
