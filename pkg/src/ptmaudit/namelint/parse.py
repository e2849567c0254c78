"""Identifier tokenizing, element tagging, convention classes and lint."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

from .lexicon import Lexicon, default_lexicon

IMPLEMENTATION_UNIT = "ImplementationUnit"
APPLICATION_OR_TASK = "ApplicationOrTask"
IMPLEMENTATION_WITH_APP_TASK = "ImplementationWithAppTask"
OTHER = "Other"

IMPLEMENTATION_TAGS = frozenset("ASCVPYRD")

# '.' is a delimiter except between two digits ("3.1", "6.7b")
_DELIM = re.compile(r"[-_/]|(?<!\d)\.|\.(?!\d)")


@dataclass(frozen=True)
class Segment:
    text: str
    sep: str = ""  # delimiter that follows this segment


@dataclass(frozen=True)
class NameParse:
    identifier: str
    segments: tuple[tuple[str, str], ...]  # (text, tag)
    separators: tuple[str, ...]  # separators[i] follows segments[i]
    owner: str | None = None

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(tag for _, tag in self.segments)

    @property
    def signature(self) -> str:
        return "-".join(self.tags)

    def reconstruct(self) -> str:
        return "".join(text + sep for (text, _), sep in zip(self.segments, self.separators))

    def to_dict(self) -> dict:
        return {
            "identifier": self.identifier,
            "segments": [{"text": t, "tag": g} for t, g in self.segments],
            "signature": self.signature,
            "convention": classify_convention(self),
        }


def tokenize_identifier(s: str) -> list[Segment]:
    """Split on ``- _ / .`` keeping each delimiter with the segment before it.

    Everything before the first ``/`` is the owner and stays one segment.
    Empty pieces from doubled delimiters are kept so the input can be rebuilt.
    """
    if not s:
        raise ValueError("identifier must be non-empty")
    out: list[Segment] = []
    rest = s
    if "/" in s:
        owner, rest = s.split("/", 1)
        out.append(Segment(owner, "/"))
    pos = 0
    for m in _DELIM.finditer(rest):
        out.append(Segment(rest[pos : m.start()], m.group()))
        pos = m.end()
    out.append(Segment(rest[pos:], ""))
    if out[-1].text == "" and len(out) > 1:
        # trailing delimiter: fold it into the previous segment's separator
        last = out.pop()
        prev = out.pop()
        out.append(Segment(prev.text, prev.sep + last.sep))
    return out


def _window_text(tokens: list[Segment], i: int, j: int) -> str:
    return "".join(t.text + (t.sep if k < j - 1 else "") for k, t in enumerate(tokens[i:j], start=i))


def classify_elements(segments: list[Segment], lex: Lexicon | None = None, identifier: str | None = None) -> NameParse:
    """Tag segments by the first matching rule in priority order, trying
    the longest run of adjacent segments first so phrases like
    ``fake-news-detection`` and ``L-12`` stay whole. Unmatched segments
    become ``O``; an owner segment (ending in ``/``) is always ``O``."""
    lex = lex or default_lexicon()
    tokens = list(segments)
    out: list[tuple[str, str]] = []
    seps: list[str] = []
    owner = None
    i = 0
    if tokens and tokens[0].sep == "/" and identifier is not None and identifier.startswith(tokens[0].text + "/"):
        owner = tokens[0].text
        out.append((owner, "O"))
        seps.append("/")
        i = 1
    width = lex.max_phrase_tokens
    while i < len(tokens):
        tag, span = None, 1
        if tokens[i].text:
            for j in range(min(len(tokens), i + width), i, -1):
                # a phrase may not swallow an owner boundary
                if any(t.sep == "/" for t in tokens[i : j - 1]):
                    continue
                text = _window_text(tokens, i, j)
                tag = lex.tag(text) or (lex.tag(text.replace("_", "-")) if "_" in text else None)
                if tag:
                    span = j - i
                    break
        out.append((_window_text(tokens, i, i + span), tag or "O"))
        seps.append(tokens[i + span - 1].sep)
        i += span
    ident = identifier if identifier is not None else "".join(t.text + t.sep for t in tokens)
    return NameParse(ident, tuple(out), tuple(seps), owner)


def parse_name(identifier: str, lex: Lexicon | None = None) -> NameParse:
    return classify_elements(tokenize_identifier(identifier), lex, identifier)


def classify_convention(p: NameParse) -> str:
    """Depends only on the multiset of tags. A language counts as
    application evidence only as a pair (a translation direction)."""
    counts = Counter(p.tags)
    implementation = any(counts[t] for t in IMPLEMENTATION_TAGS)
    application = counts["T"] > 0 or counts["L"] >= 2
    if implementation and application:
        return IMPLEMENTATION_WITH_APP_TASK
    if implementation:
        return IMPLEMENTATION_UNIT
    if application:
        return APPLICATION_OR_TASK
    return OTHER


@dataclass(frozen=True)
class LintFinding:
    identifier: str
    code: str
    message: str
    severity: str = "info"

    def line(self) -> str:
        return f"{self.identifier}: {self.severity}: {self.code}: {self.message}"


def lint(p: NameParse) -> list[LintFinding]:
    findings = []
    name_part = [(t, g) for k, (t, g) in enumerate(p.segments) if not (k == 0 and p.owner is not None) and t]
    owner_tokens = {t.text.lower() for t in tokenize_identifier(p.owner)} if p.owner else set()
    if p.owner is not None and (not name_part or all(t.lower() in owner_tokens for t, _ in name_part)):
        findings.append(LintFinding(p.identifier, "owner-only-name", "the model name only repeats its owner"))
    if "A" not in p.tags:
        findings.append(LintFinding(p.identifier, "no-architecture-token", "no segment names a known architecture"))
    if name_part and all(g == "O" for _, g in name_part):
        findings.append(LintFinding(p.identifier, "all-other-segments", "no segment matches any naming element"))
    return findings


def lint_json(parses: list[NameParse]) -> str:
    doc = [
        {**p.to_dict(), "findings": [{"code": f.code, "message": f.message, "severity": f.severity} for f in lint(p)]}
        for p in parses
    ]
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
