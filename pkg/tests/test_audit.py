from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from graphs import chain
from ptmaudit.audit import (
    ABSTAIN,
    CONSISTENT,
    INCONSISTENT,
    UNDECLARED,
    AuditPolicy,
    CompatibilityError,
    audit_corpus,
    audit_model,
)
from ptmaudit.graph_model import DeclaredMetadata, GraphDoc, LayerNode
from ptmaudit.learner.mlp import MlpModel


def _constant(n_in, labels, logits, head="softmax", vocab_hash=None):
    """A model whose output ignores the input."""
    m = MlpModel.init(n_in, labels, (2, 2, 2), head=head, vocab_hash=vocab_hash)
    for w in m.weights:
        w[:] = 0
    m.biases[3][:] = logits
    return m


def _declare(g, **kw):
    return replace(g, metadata=replace(g.metadata, **kw))


@pytest.fixture(scope="module")
def constant_models(small_trained):
    _, vocab = small_trained
    n = len(vocab)
    return {
        # p(a) ~ 0.993
        "model_type": _constant(n, ("a", "b"), [5.0, 0.0], vocab_hash=vocab.digest),
        # p(a) = p(b) = 0.5
        "architecture": _constant(n, ("a", "b"), [0.0, 0.0], vocab_hash=vocab.digest),
        # sigmoid: t1 0.99, t2 0.73, t3 0.5, t4 0.27
        "task": _constant(n, ("t1", "t2", "t3", "t4"), [5.0, 1.0, 0.0, -1.0], "sigmoid", vocab.digest),
    }, vocab


# -- verdict rules -------------------------------------------------------------


@pytest.mark.parametrize(
    "declared, verdict",
    [("a", CONSISTENT), ("b", INCONSISTENT), (None, UNDECLARED)],
)
def test_confident_single_label_rules(small_corpus, constant_models, declared, verdict):
    models, vocab = constant_models
    e = audit_model(_declare(small_corpus[0], model_type=declared), models, vocab)
    assert e.facets["model_type"].verdict == verdict
    assert e.facets["model_type"].confidence == pytest.approx(1 / (1 + np.exp(-5)))


def test_low_confidence_mismatch_abstains(small_corpus, constant_models):
    models, vocab = constant_models
    g = _declare(small_corpus[0], architecture="nope")
    assert audit_model(g, models, vocab).facets["architecture"].verdict == ABSTAIN
    # a threshold of 0.5 makes the same mismatch confident enough to flag
    assert audit_model(g, models, vocab, AuditPolicy(min_confidence=0.5)).facets["architecture"].verdict == INCONSISTENT


@pytest.mark.parametrize(
    "tasks, k, verdict",
    [
        ({"t3"}, 3, CONSISTENT),
        ({"t4"}, 3, INCONSISTENT),
        ({"t4"}, 4, CONSISTENT),
        ({"t4", "t1"}, 1, CONSISTENT),
        ({"other"}, 1, INCONSISTENT),
        (set(), 3, UNDECLARED),
    ],
)
def test_task_top_k_rule(small_corpus, constant_models, tasks, k, verdict):
    models, vocab = constant_models
    g = _declare(small_corpus[0], tasks=frozenset(tasks))
    v = audit_model(g, models, vocab, AuditPolicy(task_k=k)).facets["task"]
    assert v.verdict == verdict
    assert [label for label, _ in v.predicted] == ["t1", "t2", "t3", "t4"][:k]


def test_out_of_vocabulary_graph_abstains(constant_models):
    models, vocab = constant_models
    g = chain("Zzz", "Yyy", "Xxx")
    g = replace(g, metadata=DeclaredMetadata("oov", "b", "b", frozenset({"other"})))
    e = audit_model(g, models, vocab)
    assert e.oov_ratio > 0.5
    assert {v.verdict for v in e.facets.values()} == {ABSTAIN}
    lenient = audit_model(g, models, vocab, AuditPolicy(oov_abstain_ratio=1.0))
    assert lenient.facets["model_type"].verdict == INCONSISTENT


def test_policy_validation():
    with pytest.raises(ValueError):
        AuditPolicy(min_confidence=1.5)
    with pytest.raises(ValueError):
        AuditPolicy(task_k=0)
    with pytest.raises(ValueError):
        AuditPolicy.from_dict({"min_confidence": 0.5, "bogus": 1})
    assert AuditPolicy.from_dict({"task_k": 2}).task_k == 2


# -- compatibility -------------------------------------------------------------


def test_foreign_vocabulary_is_rejected(small_corpus, constant_models):
    models, vocab = constant_models
    foreign = dict(models, model_type=_constant(len(vocab), ("a", "b"), [1.0, 0.0], vocab_hash="0" * 32))
    with pytest.raises(CompatibilityError):
        audit_corpus(small_corpus[:1], foreign, vocab)
    wrong_dim = dict(models, model_type=_constant(len(vocab) + 1, ("a", "b"), [1.0, 0.0]))
    with pytest.raises(CompatibilityError):
        audit_model(small_corpus[0], wrong_dim, vocab)


# -- corpus-level behaviour ----------------------------------------------------


def test_empty_corpus(small_trained):
    models, vocab = small_trained
    r = audit_corpus([], models, vocab)
    assert r.entries == [] and not r.has_inconsistency
    assert r.summary == {"errors": {"count": 0}}


def test_broken_document_is_recorded_not_raised(small_corpus, small_trained):
    models, vocab = small_trained
    bad = GraphDoc((LayerNode("a", "Conv2d"),), (("a", "missing"),), ("a",), ("a",), DeclaredMetadata("bad", "x"))
    r = audit_corpus([bad, small_corpus[0]], models, vocab)
    assert [e.identifier for e in r.entries] == sorted(["bad", small_corpus[0].metadata.identifier])
    assert r.summary["errors"]["count"] == 1
    assert any(line.startswith("bad\terror\t") for line in r.to_lines())


def test_clean_corpus_has_no_inconsistency(small_corpus, small_trained):
    models, vocab = small_trained
    assert not audit_corpus(small_corpus, models, vocab).has_inconsistency


def _confident_doc(docs, models, vocab):
    for g in docs:
        e = audit_model(g, models, vocab)
        if e.facets["model_type"].confidence >= 0.9 and all(v.verdict == CONSISTENT for v in e.facets.values()):
            return g, e
    raise AssertionError("no confidently classified document")


def test_induced_mismatch_is_exactly_one_inconsistency(small_corpus, small_trained):
    models, vocab = small_trained
    g, before = _confident_doc(small_corpus, models, vocab)
    other = next(label for label in models["model_type"].labels if label != g.metadata.model_type)
    after = audit_model(_declare(g, model_type=other), models, vocab)
    assert after.facets["model_type"].verdict == INCONSISTENT
    # the other facets do not move
    for facet in ("architecture", "task"):
        assert after.facets[facet] == before.facets[facet]
    docs = [_declare(d, model_type=other) if d is g else d for d in small_corpus]
    assert audit_corpus(docs, models, vocab).count(INCONSISTENT) == 1


def test_raising_threshold_never_adds_inconsistencies(small_corpus, small_trained):
    models, vocab = small_trained
    labels = models["model_type"].labels
    noisy = [_declare(g, model_type=labels[(labels.index(g.metadata.model_type) + 1) % len(labels)]) if i % 3 == 0 else g
             for i, g in enumerate(small_corpus)]
    counts = [audit_corpus(noisy, models, vocab, AuditPolicy(min_confidence=t)).count(INCONSISTENT)
              for t in (0.0, 0.3, 0.5, 0.8, 0.95, 1.0)]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > 0


def test_missing_facet_model_is_skipped(small_corpus, small_trained):
    models, vocab = small_trained
    e = audit_model(small_corpus[0], {"task": models["task"]}, vocab)
    assert list(e.facets) == ["task"]


def test_report_serialization_is_deterministic(small_corpus, small_trained):
    models, vocab = small_trained
    a = audit_corpus(small_corpus, models, vocab)
    b = audit_corpus(list(reversed(small_corpus)), models, vocab)
    assert a.to_json() == b.to_json() and a.to_lines() == b.to_lines()
    doc = json.loads(a.to_json())
    assert doc["summary"] == a.summary and len(doc["entries"]) == len(small_corpus)
