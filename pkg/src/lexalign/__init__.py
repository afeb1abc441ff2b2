"""Bilingual word embeddings learned from dictionary definitions."""

from lexalign.errors import (
    KindMismatchError,
    LanguageMismatchError,
    LexalignError,
    ParseError,
)

__version__ = "0.1.0"

__all__ = [
    "KindMismatchError",
    "LanguageMismatchError",
    "LexalignError",
    "ParseError",
]
