"""Mean-field games between two large teams: CC assembly, Riccati solvers, simulation and oracles."""

__version__ = "0.1.0"
