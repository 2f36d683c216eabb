"""Unsupervised hyperspectral band selection with LiDAR-fused attention masks."""

__version__ = "0.1.0"
