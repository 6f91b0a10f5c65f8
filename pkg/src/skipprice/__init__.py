"""Skip monetization toolkit: pricing optimizers and market simulation."""

__version__ = "0.1.0"
