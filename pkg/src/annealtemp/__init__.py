"""Temperature estimation for annealer sample sets on Ising spin glasses."""

__version__ = "0.1.0"
