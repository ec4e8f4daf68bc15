"""Wind-regime classification of speed-series windows with Dirichlet mixtures."""

__version__ = "0.1.0"
