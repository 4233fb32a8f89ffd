"""D2D content-delivery offloading on a vehicular road: analytic model,
protocol simulator, Monte Carlo oracles, and a batch CLI."""

__version__ = "0.1.0"
