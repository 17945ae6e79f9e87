"""Cost-aware hold-value Q-learning for online single-asset trading."""

__version__ = "0.1.0"
