"""Near-end listening enhancement with a metric-surrogate GAN."""

__version__ = "0.1.0"
