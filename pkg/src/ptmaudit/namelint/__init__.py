"""Rule-based tagging of model identifiers with naming elements and
naming conventions."""

from .lexicon import ELEMENT_TAGS, PRIORITY, Lexicon, default_lexicon
from .parse import (
    APPLICATION_OR_TASK,
    IMPLEMENTATION_UNIT,
    IMPLEMENTATION_WITH_APP_TASK,
    OTHER,
    LintFinding,
    NameParse,
    Segment,
    classify_convention,
    classify_elements,
    lint,
    parse_name,
    tokenize_identifier,
)

__all__ = [
    "APPLICATION_OR_TASK",
    "ELEMENT_TAGS",
    "IMPLEMENTATION_UNIT",
    "IMPLEMENTATION_WITH_APP_TASK",
    "OTHER",
    "PRIORITY",
    "Lexicon",
    "LintFinding",
    "NameParse",
    "Segment",
    "classify_convention",
    "classify_elements",
    "default_lexicon",
    "lint",
    "parse_name",
    "tokenize_identifier",
]
