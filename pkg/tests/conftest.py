from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ptmaudit.corpus import CorpusSpec, gen_corpus  # noqa: E402
from ptmaudit.learner.train import TrainConfig, train  # noqa: E402
from ptmaudit.pipeline import FACETS, facet_dataset, prepare  # noqa: E402

SMALL_SPEC = CorpusSpec(families=5, instances=12, seed=3)
SMALL_CFG = TrainConfig(epochs=15, hidden=(64, 32, 16))


@pytest.fixture(scope="session")
def small_corpus():
    return gen_corpus(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_trained(small_corpus):
    """Models for every facet trained on the small corpus, plus its vocab."""
    feats, vocab = prepare(small_corpus)
    models = {}
    for facet in FACETS:
        ds = facet_dataset(feats, small_corpus, vocab, facet)
        mode = "bce" if facet == "task" else "ce"
        models[facet], _ = train(ds, replace(SMALL_CFG, loss_mode=mode), vocab.digest)
    return models, vocab


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
