"""Compare classifier predictions with declared metadata."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .features import FeatureVocab
from .graph_model import GraphDoc
from .learner.mlp import MlpModel, predict
from .pipeline import FACETS, featurize

logger = logging.getLogger(__name__)

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
ABSTAIN = "abstain"
UNDECLARED = "undeclared"
VERDICTS = (CONSISTENT, INCONSISTENT, ABSTAIN, UNDECLARED)


class CompatibilityError(ValueError):
    """A model was trained against a different vocabulary."""


@dataclass(frozen=True)
class AuditPolicy:
    min_confidence: float = 0.8
    task_k: int = 3
    oov_abstain_ratio: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        if self.task_k < 1:
            raise ValueError("task_k must be at least 1")
        if not 0.0 <= self.oov_abstain_ratio <= 1.0:
            raise ValueError("oov_abstain_ratio must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> AuditPolicy:
        unknown = set(d) - {"min_confidence", "task_k", "oov_abstain_ratio"}
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FacetVerdict:
    facet: str
    declared: tuple[str, ...]
    predicted: tuple[tuple[str, float], ...]
    confidence: float
    verdict: str


@dataclass
class AuditEntry:
    identifier: str
    facets: dict[str, FacetVerdict] = field(default_factory=dict)
    oov_ratio: float = 0.0
    error: str | None = None


def check_compatibility(models: Mapping[str, MlpModel], vocab: FeatureVocab) -> None:
    digest = vocab.digest
    for facet, m in models.items():
        if m.vocab_hash is not None and m.vocab_hash != digest:
            raise CompatibilityError(f"{facet} model was trained on vocabulary {m.vocab_hash[:12]}, not {digest[:12]}")
        if m.dims[0] != len(vocab):
            raise CompatibilityError(f"{facet} model expects {m.dims[0]} features, vocabulary has {len(vocab)}")


def _judge(facet: str, declared: tuple[str, ...], probs: np.ndarray, m: MlpModel, policy: AuditPolicy, abstain: bool) -> FacetVerdict:
    order = np.argsort(-probs, kind="stable")
    k = policy.task_k if facet == "task" else 1
    top = tuple((m.labels[i], float(probs[i])) for i in order[: max(k, 1)])
    confidence = top[0][1]
    if not declared:
        verdict = UNDECLARED
    elif abstain:
        verdict = ABSTAIN
    elif any(label in declared for label, _ in top):
        verdict = CONSISTENT
    elif confidence >= policy.min_confidence:
        verdict = INCONSISTENT
    else:
        verdict = ABSTAIN
    return FacetVerdict(facet, declared, top, confidence, verdict)


def audit_model(
    g: GraphDoc,
    models: Mapping[str, MlpModel],
    vocab: FeatureVocab,
    policy: AuditPolicy = AuditPolicy(),
    *,
    checked: bool = False,
) -> AuditEntry:
    """Run the pipeline on ``g`` and judge each facet that has a model.

    Single-label facets are inconsistent when the top-1 prediction differs
    from the declared value with at least ``min_confidence``; the task facet
    when no declared task is among the top ``task_k`` predictions.
    """
    if not checked:
        check_compatibility(models, vocab)
    fv = featurize(g, vocab)
    abstain = fv.oov_ratio > policy.oov_abstain_ratio
    meta = g.metadata
    entry = AuditEntry(meta.identifier, oov_ratio=fv.oov_ratio)
    declared_by_facet = {
        "model_type": (meta.model_type,) if meta.model_type else (),
        "architecture": (meta.architecture,) if meta.architecture else (),
        "task": tuple(sorted(meta.tasks)),
    }
    for facet in FACETS:
        if facet not in models:
            continue
        m = models[facet]
        probs = predict(m, fv.values)
        entry.facets[facet] = _judge(facet, declared_by_facet[facet], probs, m, policy, abstain)
    return entry


@dataclass
class AuditReport:
    entries: list[AuditEntry] = field(default_factory=list)

    @property
    def summary(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for facet in FACETS:
            c = Counter(e.facets[facet].verdict for e in self.entries if facet in e.facets)
            if c:
                out[facet] = {v: c.get(v, 0) for v in VERDICTS}
        out["errors"] = {"count": sum(1 for e in self.entries if e.error)}
        return out

    def count(self, verdict: str, facet: str | None = None) -> int:
        return sum(
            1
            for e in self.entries
            for f, v in e.facets.items()
            if v.verdict == verdict and (facet is None or f == facet)
        )

    @property
    def has_inconsistency(self) -> bool:
        return self.count(INCONSISTENT) > 0

    def to_lines(self) -> list[str]:
        lines = []
        for e in self.entries:
            if e.error:
                lines.append(f"{e.identifier}\terror\t{e.error}")
                continue
            for facet, v in e.facets.items():
                pred = ",".join(f"{label}:{p:.3f}" for label, p in v.predicted)
                lines.append(f"{e.identifier}\t{facet}\t{v.verdict}\tdeclared={','.join(v.declared) or '-'}\tpredicted={pred}")
        return lines

    def to_json(self) -> str:
        doc = {
            "summary": self.summary,
            "entries": [
                {
                    "identifier": e.identifier,
                    "oov_ratio": e.oov_ratio,
                    "error": e.error,
                    "facets": {
                        f: {
                            "declared": list(v.declared),
                            "predicted": [[label, p] for label, p in v.predicted],
                            "confidence": v.confidence,
                            "verdict": v.verdict,
                        }
                        for f, v in e.facets.items()
                    },
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def audit_corpus(
    gs: Iterable[GraphDoc],
    models: Mapping[str, MlpModel],
    vocab: FeatureVocab,
    policy: AuditPolicy = AuditPolicy(),
) -> AuditReport:
    """Audit every document. A failure on one model is recorded on its
    entry and never stops the batch. Entries are ordered by identifier."""
    check_compatibility(models, vocab)
    entries = []
    for i, g in enumerate(gs):
        try:
            entries.append(audit_model(g, models, vocab, policy, checked=True))
        except Exception as exc:  # noqa: BLE001 - collected per model
            ident = g.metadata.identifier or f"#{i}"
            logger.warning("audit of %s failed: %s", ident, exc)
            entries.append(AuditEntry(ident, error=f"{type(exc).__name__}: {exc}"))
    entries.sort(key=lambda e: e.identifier)
    return AuditReport(entries)
