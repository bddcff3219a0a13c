"""Opinion dynamics on social networks: majority/plurality dynamics,
election systems, graph families and Monte Carlo experiments."""

__version__ = "0.1.0"
