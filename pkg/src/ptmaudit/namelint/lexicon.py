"""Naming-element lexicon: word lists and patterns per element tag."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

# section header -> element tag
SECTIONS = {
    "architecture": "A",
    "size": "S",
    "dataset": "D",
    "characteristic": "C",
    "version": "V",
    "language": "L",
    "task": "T",
    "training": "R",
    "reuse": "F",
    "layers": "Y",
    "parameters": "P",
}
ELEMENT_TAGS = ("A", "S", "D", "C", "V", "L", "T", "R", "F", "Y", "P", "O")
# patterns are more precise than word lists, so pattern-heavy tags go first
PRIORITY = ("V", "P", "Y", "S", "C", "A", "D", "L", "T", "R", "F")


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    words: dict[str, frozenset[str]]
    patterns: dict[str, tuple[re.Pattern[str], ...]]

    def tag(self, text: str) -> str | None:
        """First element tag, in priority order, whose words or patterns
        match ``text`` (case-insensitive); None when nothing matches."""
        low = text.lower()
        for tag in PRIORITY:
            if low in self.words.get(tag, ()):
                return tag
            if any(p.fullmatch(low) for p in self.patterns.get(tag, ())):
                return tag
        return None

    @property
    def max_phrase_tokens(self) -> int:
        longest = 1
        for words in self.words.values():
            for w in words:
                longest = max(longest, len(re.split(r"[-_.]", w)))
        return max(longest, 2)

    @classmethod
    def parse(cls, text: str) -> Lexicon:
        words: dict[str, set[str]] = {t: set() for t in SECTIONS.values()}
        patterns: dict[str, list[re.Pattern[str]]] = {t: [] for t in SECTIONS.values()}
        tag = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip().lower()
                if name not in SECTIONS:
                    raise LexiconError(f"line {lineno}: unknown section [{name}]")
                tag = SECTIONS[name]
                continue
            if tag is None:
                raise LexiconError(f"line {lineno}: entry before any section header")
            if line.startswith("re:"):
                try:
                    patterns[tag].append(re.compile(line[3:], re.IGNORECASE))
                except re.error as exc:
                    raise LexiconError(f"line {lineno}: bad pattern: {exc}") from None
            else:
                words[tag].add(line.lower())
        return cls({t: frozenset(w) for t, w in words.items()}, {t: tuple(p) for t, p in patterns.items()})

    @classmethod
    def load(cls, path: str | Path) -> Lexicon:
        return cls.parse(Path(path).read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files(__package__).joinpath("lexicon.txt").read_text(encoding="utf-8")
    return Lexicon.parse(text)
