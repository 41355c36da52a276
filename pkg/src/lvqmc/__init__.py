"""Local-volatility Monte Carlo pricing as reversible circuits, with classical oracles."""

__version__ = "0.1.0"
