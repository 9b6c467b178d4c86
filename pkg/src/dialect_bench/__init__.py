"""Dialect identification and ASR evaluation toolkit over frame embeddings."""

__version__ = "0.1.0"
