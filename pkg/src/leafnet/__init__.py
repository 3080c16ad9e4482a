"""leafnet: a numpy CNN for medicinal plant leaf classification."""

__version__ = "0.1.0"
