"""Light-weight probing toolkit for unsupervised RL representations."""

__version__ = "0.1.0"
