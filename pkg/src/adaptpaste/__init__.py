"""Learning to adapt pasted code snippets to their surrounding context."""

from .anonymizer import AdaptationMapping, AnonymizedSample, anonymize, classify_variables, restore
from .corpus import SourceFile, ingest, split
from .syntax import PasteInstance, parse, sample_snippets

__version__ = "0.1.0"

__all__ = [
    "AdaptationMapping", "AnonymizedSample", "PasteInstance", "SourceFile", "anonymize", "classify_variables",
    "ingest", "parse", "restore", "sample_snippets", "split",
]
