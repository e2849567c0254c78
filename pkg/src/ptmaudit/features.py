"""Structural n-gram features.

Two families of counts are drawn from an abstract architecture:

* ``l``: 2-grams of connected layer types, ``"(LayerNorm, Linear)"``, with
  ``[INPUT]``/``[OUTPUT]`` sentinels on graph boundaries;
* ``p``: 1-grams of full parameter signatures,
  ``"Linear ['<in_features, 4096>', '<out_features, 4096>']"``.

Counts stay raw everywhere in this module.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .aptm import INPUT_TOKEN, OUTPUT_TOKEN, Aptm, layer_sequence, param_signature
from .graph_model import DeclaredMetadata

L_ONLY = "l"
L_AND_P = "l+p"
VOCAB_HEADER = "#ptmaudit-vocab 1"


def connection_key(a: str, b: str) -> str:
    return f"({a}, {b})"


@dataclass
class NgramFeature:
    l: dict[str, int] = field(default_factory=dict)
    p: dict[str, int] = field(default_factory=dict)

    def __add__(self, other: NgramFeature) -> NgramFeature:
        return NgramFeature(dict(Counter(self.l) + Counter(other.l)), dict(Counter(self.p) + Counter(other.p)))

    def total(self) -> int:
        return sum(self.l.values()) + sum(self.p.values())


def extract_ngrams(a: Aptm, parts: str = L_AND_P) -> NgramFeature:
    if parts not in (L_ONLY, L_AND_P):
        raise ValueError(f"parts must be {L_ONLY!r} or {L_AND_P!r}, got {parts!r}")
    layers = a.layer_map
    l: Counter[str] = Counter()
    for root in a.roots:
        l[connection_key(INPUT_TOKEN, layers[root].op_type)] += 1
    for layer in a.layers:
        for child in layer.children:
            l[connection_key(layer.op_type, layers[child].op_type)] += 1
    for out in a.outputs:
        l[connection_key(layers[out].op_type, OUTPUT_TOKEN)] += 1
    p: Counter[str] = Counter()
    if parts == L_AND_P:
        for layer in a.layers:
            p[param_signature(layer.op_type, layer.params)] += 1
    return NgramFeature(dict(l), dict(p))


def export_feature_json(f: NgramFeature) -> str:
    return json.dumps({"l": f.l, "p": f.p}, indent=2, ensure_ascii=False) + "\n"


def import_feature_json(text: str) -> NgramFeature:
    doc = json.loads(text)
    if not isinstance(doc, dict) or set(doc) - {"l", "p"}:
        raise ValueError("feature document must be an object with keys 'l' and 'p'")
    out = NgramFeature()
    for part in ("l", "p"):
        counts = doc.get(part, {})
        for key, value in counts.items():
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{part}[{key!r}]: counts must be positive integers")
        setattr(out, part, dict(counts))
    return out


def export_sequence_json(a: Aptm, m: DeclaredMetadata) -> str:
    body = {
        "layers": " ".join(layer_sequence(a)),
        "model_type": m.model_type,
        "arch": m.architecture,
        "task": sorted(m.tasks),
    }
    return json.dumps({m.identifier: body}, indent=2, ensure_ascii=False) + "\n"


def import_sequence_json(text: str) -> tuple[list[str], DeclaredMetadata]:
    doc = json.loads(text)
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError("sequence document must hold exactly one model")
    ((identifier, body),) = doc.items()
    meta = DeclaredMetadata(identifier, body.get("model_type"), body.get("arch"), frozenset(body.get("task", [])))
    return body["layers"].split(), meta


# --------------------------------------------------------------------------
# vocabulary and vectors


@dataclass(frozen=True)
class FeatureVocab:
    l_keys: tuple[str, ...]
    p_keys: tuple[str, ...] = ()
    parts: str = L_AND_P
    index: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for part, keys in (("l", self.l_keys), ("p", self.p_keys)):
            if len(set(keys)) != len(keys):
                raise ValueError(f"duplicate {part} keys in vocabulary")
            if any("\n" in k for k in keys):
                raise ValueError(f"{part} keys may not contain line breaks")
        index = {("l", k): i for i, k in enumerate(self.l_keys)}
        index.update({("p", k): len(self.l_keys) + i for i, k in enumerate(self.p_keys)})
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.l_keys) + len(self.p_keys)

    def key(self, i: int) -> str:
        return self.l_keys[i] if i < len(self.l_keys) else self.p_keys[i - len(self.l_keys)]

    def dumps(self) -> str:
        lines = [VOCAB_HEADER, f"parts {self.parts}", "[l]", *self.l_keys, "[p]", *self.p_keys]
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        """Reference hash that trained models record for compatibility checks."""
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    @classmethod
    def loads(cls, text: str) -> FeatureVocab:
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != VOCAB_HEADER:
            raise ValueError(f"not a vocabulary file (expected header {VOCAB_HEADER!r})")
        if len(lines) < 4 or not lines[1].startswith("parts ") or lines[2] != "[l]" or "[p]" not in lines:
            raise ValueError("vocabulary file is missing its 'parts', [l] or [p] lines")
        split = lines.index("[p]", 3)
        return cls(tuple(lines[3:split]), tuple(lines[split + 1 :]), lines[1][len("parts ") :])


def build_vocab(features: Iterable[NgramFeature], parts: str = L_AND_P) -> FeatureVocab:
    features = list(features)
    if not features:
        raise ValueError("cannot build a vocabulary from an empty collection")
    l_total: Counter[str] = Counter()
    p_total: Counter[str] = Counter()
    for f in features:
        l_total.update(f.l)
        p_total.update(f.p)

    def ordered(c: Counter[str]) -> tuple[str, ...]:
        return tuple(k for k, _ in sorted(c.items(), key=lambda kv: (-kv[1], kv[0])))

    return FeatureVocab(ordered(l_total), ordered(p_total) if parts == L_AND_P else (), parts)


@dataclass
class FeatureVector:
    values: np.ndarray
    oov_l: int = 0
    oov_p: int = 0

    @property
    def oov_ratio(self) -> float:
        seen = float(self.values.sum())
        oov = self.oov_l + self.oov_p
        total = seen + oov
        return oov / total if total else 0.0


def vectorize(f: NgramFeature, v: FeatureVocab) -> FeatureVector:
    values = np.zeros(len(v), dtype=np.float64)
    oov = {"l": 0, "p": 0}
    for part, counts in (("l", f.l), ("p", f.p)):
        if part == "p" and v.parts == L_ONLY:
            continue
        for key, count in counts.items():
            pos = v.index.get((part, key))
            if pos is None:
                oov[part] += count
            else:
                values[pos] += count
    return FeatureVector(values, oov["l"], oov["p"])
