"""End-to-end composition of the stages, shared by the CLI, the auditor
and the benchmark."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .aptm import Aptm, build_aptm
from .features import L_AND_P, FeatureVector, FeatureVocab, NgramFeature, build_vocab, extract_ngrams, vectorize
from .graph_model import GraphDoc
from .learner.train import LabeledDataset

FACETS = ("model_type", "architecture", "task")


def ngrams_of(g: GraphDoc, parts: str = L_AND_P) -> NgramFeature:
    return extract_ngrams(build_aptm(g), parts)


def featurize(g: GraphDoc, vocab: FeatureVocab) -> FeatureVector:
    return vectorize(ngrams_of(g, vocab.parts), vocab)


def corpus_features(docs: Iterable[GraphDoc], parts: str = L_AND_P) -> list[NgramFeature]:
    return [ngrams_of(g, parts) for g in docs]


def facet_labels(docs: Sequence[GraphDoc], facet: str) -> list:
    if facet == "model_type":
        return [g.metadata.model_type for g in docs]
    if facet == "architecture":
        return [g.metadata.architecture for g in docs]
    if facet == "task":
        return [g.metadata.tasks for g in docs]
    raise ValueError(f"unknown facet {facet!r}; expected one of {FACETS}")


def facet_dataset(features: Sequence[NgramFeature], docs: Sequence[GraphDoc], vocab: FeatureVocab, facet: str) -> LabeledDataset:
    """Rows whose facet is declared; undeclared rows are skipped."""
    labels = facet_labels(docs, facet)
    keep = [i for i, y in enumerate(labels) if y]
    x = np.stack([vectorize(features[i], vocab).values for i in keep]) if keep else np.zeros((0, len(vocab)))
    return LabeledDataset(x, [labels[i] for i in keep], multilabel=facet == "task")


def prepare(docs: Sequence[GraphDoc], parts: str = L_AND_P) -> tuple[list[NgramFeature], FeatureVocab]:
    feats = corpus_features(docs, parts)
    return feats, build_vocab(feats, parts)


__all__ = ["Aptm", "FACETS", "corpus_features", "facet_dataset", "facet_labels", "featurize", "ngrams_of", "prepare"]
