"""Minimal dense-tensor neural substrate used by the attention and autoencoder nets."""
