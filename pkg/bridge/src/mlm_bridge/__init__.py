"""Masked-LM scoring bridge speaking the v1 line protocol."""

from .serve import BridgeConfig, MaskedLmScorer, serve

__all__ = ["BridgeConfig", "MaskedLmScorer", "serve"]
