"""Latent-conditioned transformer imitation with divergent expert matching."""

__version__ = "0.1.0"
