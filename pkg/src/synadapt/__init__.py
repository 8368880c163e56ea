"""Syntax-aware adapters for small code encoders: AST token types, NER
adapters trained with token-type classification, and AdapterFusion."""

from pathlib import Path

__version__ = "0.1.0"


def toy_corpus_path() -> Path:
    """Directory of the bundled hand-written toy corpus (one folder per language)."""
    return Path(__file__).with_name("toy_corpus")
