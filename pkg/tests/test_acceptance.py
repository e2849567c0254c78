"""Acceptance suite. Each criterion records one PASS/FAIL line, printed in
the pytest terminal summary (see conftest.py) and asserted here."""

from __future__ import annotations

import hashlib
import os
import subprocess
import sys
import time
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gradcheck import GRADIENT_CHECKS, unit_rows
from graphs import inject_cycles, kahn_acyclic, random_dag, relabel
from ptmaudit.aptm import build_aptm, export_aptm, to_rooted_dag
from ptmaudit.audit import INCONSISTENT, AuditPolicy, audit_corpus
from ptmaudit.bench import STAGES, bench, to_tsv
from ptmaudit.corpus import CorpusSpec, gen_corpus
from ptmaudit.features import export_feature_json, export_sequence_json, extract_ngrams
from ptmaudit.graph_model import parse_graph_doc
from ptmaudit.learner import losses
from ptmaudit.learner.mlp import MlpModel, predict
from ptmaudit.learner.train import TrainConfig, kfold, train
from ptmaudit.namelint import classify_convention, parse_name
from ptmaudit.pipeline import FACETS, facet_dataset, featurize, prepare

GOLDEN = Path(__file__).parent / "golden"
RESULTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def _instance_index(g) -> int:
    return int(g.metadata.identifier.rsplit("-", 1)[1])


@pytest.fixture(scope="module")
def full_corpus():
    """20 families with 60 instances each: instances 0-29 form the 20 x 30
    training corpus, 30-59 are unseen members of the same families."""
    docs = gen_corpus(CorpusSpec(families=20, instances=60, seed=0))
    fit = [g for g in docs if _instance_index(g) < 30]
    held = [g for g in docs if _instance_index(g) >= 30]
    return fit, held


@pytest.fixture(scope="module")
def full_models(full_corpus):
    fit, _ = full_corpus
    feats, vocab = prepare(fit)
    models = {}
    for facet in FACETS:
        cfg = TrainConfig(loss_mode="bce" if facet == "task" else "ce")
        models[facet], _ = train(facet_dataset(feats, fit, vocab, facet), cfg, vocab.digest)
    return models, vocab


# 1 -----------------------------------------------------------------------------


def test_1_canonicalization_invariance():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    trials = failures = 0
    for _ in range(20):
        base = random_dag(rng, int(rng.integers(30, 80)), n_inputs=int(rng.integers(1, 3)))
        ref = export_aptm(build_aptm(base))
        for _ in range(50):
            trials += 1
            failures += export_aptm(build_aptm(relabel(rng, base))) != ref
    elapsed = time.perf_counter() - start
    verdict(1, trials == 1000 and failures == 0 and elapsed < 30,
            f"{trials} permutations, {failures} failures, {elapsed:.1f}s")


# 2 -----------------------------------------------------------------------------


def test_2_cycle_breaking():
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(200):
        g = inject_cycles(rng, random_dag(rng, int(rng.integers(10, 60))), int(rng.integers(1, 6)))
        assert not kahn_acyclic([n.id for n in g.nodes], g.edges)
        d = to_rooted_dag(g)
        failures += not kahn_acyclic([n.id for n in d.nodes], d.edges())
    verdict(2, failures == 0, f"200 cyclic graphs, {failures} failures")


# 3 -----------------------------------------------------------------------------


def test_3_feature_format_fidelity():
    names = sorted(p.name.split(".")[0] for p in GOLDEN.glob("*.graph.json"))
    mismatched = []
    for name in names:
        g = parse_graph_doc((GOLDEN / f"{name}.graph.json").read_text())
        a = build_aptm(g)
        produced = {
            "features": export_feature_json(extract_ngrams(a)),
            "aptm": export_aptm(a),
            "sequence": export_sequence_json(a, g.metadata),
        }
        mismatched += [f"{name}.{kind}" for kind, text in produced.items()
                       if text != (GOLDEN / f"{name}.{kind}.json").read_text()]
    listing = (GOLDEN / "vision_block.features.json").read_text()
    shapes = '"(LayerNorm, Linear)"' in listing and "\"Linear ['<in_features, 4096>', '<out_features, 4096>']\"" in listing
    verdict(3, not mismatched and shapes and len(names) >= 3,
            f"{len(names)} fixtures byte-exact, mismatches={mismatched}")


# 4 -----------------------------------------------------------------------------


def test_4_loss_gradients():
    worst = {}
    for name, check in sorted(GRADIENT_CHECKS.items()):
        rng = np.random.default_rng(zlib.crc32(b"acceptance-" + name.encode()))
        worst[name] = max(check(rng) for _ in range(100))
    zero_ok = True
    for tau in (0.1, 0.5, 1.0):
        z = unit_rows(np.random.default_rng(1), 1, 5)
        zero_ok &= abs(losses.supcon_loss(np.vstack([z, z]), [3, 3], tau)) < 1e-12
        zero_ok &= losses.supcon_loss(unit_rows(np.random.default_rng(2), 2, 5), [0, 1], tau) == 0.0
    ok = len(worst) == 6 and max(worst.values()) <= 1e-4 and zero_ok
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    verdict(4, ok, f"100 instances each, worst rel err {detail}; zero cases {'hold' if zero_ok else 'fail'}")


# 5 -----------------------------------------------------------------------------


def test_5_classifier_competence(full_corpus):
    fit, _ = full_corpus
    start = time.perf_counter()
    feats, vocab = prepare(fit, "l+p")
    res = kfold(facet_dataset(feats, fit, vocab, "model_type"), TrainConfig(), k=5, vocab_hash=vocab.digest)
    elapsed = time.perf_counter() - start
    acc, sd = res.mean()["accuracy"], res.std()["accuracy"]
    verdict(5, len(fit) == 600 and acc >= 0.95 and elapsed < 300,
            f"5-fold model_type accuracy {100 * acc:.1f}±{100 * sd:.1f}% on 20x30, {elapsed:.1f}s")


# 6 -----------------------------------------------------------------------------


def _mislabel(docs, models, rate, seed):
    """Corrupt ``rate`` of the documents per facet; returns the noisy corpus
    and the identifiers corrupted for each facet."""
    rng = np.random.default_rng(seed)
    noisy, injected = list(docs), {}
    k = round(rate * len(docs))
    for facet in FACETS:
        labels = models[facet].labels
        injected[facet] = set()
        for i in sorted(rng.choice(len(docs), k, replace=False)):
            m = noisy[i].metadata
            if facet == "task":
                m = replace(m, tasks=frozenset({str(rng.choice([t for t in labels if t not in m.tasks]))}))
            else:
                current = getattr(m, facet)
                m = replace(m, **{facet: str(rng.choice([v for v in labels if v != current]))})
            noisy[i] = replace(noisy[i], metadata=m)
            injected[facet].add(m.identifier)
    return noisy, injected


def test_6_audit_efficacy(full_corpus, full_models):
    _, held = full_corpus
    models, vocab = full_models
    noisy, injected = _mislabel(held, models, 0.05, seed=1)
    policy = AuditPolicy()
    report = audit_corpus(noisy, models, vocab, policy)
    flagged = {e.identifier for e in report.entries if e.facets["model_type"].verdict == INCONSISTENT}
    caught = len(flagged & injected["model_type"]) / len(injected["model_type"])
    unsound = [(e.identifier, f) for e in report.entries for f, v in e.facets.items()
               if v.verdict == INCONSISTENT and v.confidence < policy.min_confidence]
    verdict(6, caught >= 0.90 and not unsound,
            f"{len(injected['model_type'])} injected model_type mismatches, {100 * caught:.1f}% flagged; "
            f"{len(unsound)} inconsistent verdicts below {policy.min_confidence}")


# 7 -----------------------------------------------------------------------------


def test_7_latency(full_corpus, full_models):
    _, held = full_corpus
    models, vocab = full_models
    timings = bench(held[:200], models, vocab, repetitions=3)
    table = to_tsv(timings).splitlines()
    per_model_ms = {s.stage: s.mean_ms for s in timings}["predict"] / len(models)
    # the same stage measured one model at a time
    x = featurize(held[0], vocab).values
    direct = {}
    for facet, m in models.items():
        for _ in range(20):
            predict(m, x)
        samples = []
        for _ in range(200):
            t0 = time.perf_counter_ns()
            predict(m, x)
            samples.append((time.perf_counter_ns() - t0) / 1e6)
        direct[facet] = float(np.median(samples))
    full_table = [line.split("\t")[0] for line in table[1:]] == list(STAGES) and all(t.n == 600 for t in timings)
    ok = full_table and per_model_ms <= 1.0 and max(direct.values()) <= 1.0
    verdict(7, ok, f"predict {per_model_ms:.3f} ms per model in bench, "
            + " ".join(f"{k}={v:.3f}ms" for k, v in direct.items()) + f"; {len(table) - 1}-stage table")


# 8 -----------------------------------------------------------------------------


def test_8_name_parsing():
    signatures = {"bert-base-uncased-finetuned-spam": "A-S-C-F-D", "Meta-Llama-3.1-8B-Instruct": "O-A-V-P-F"}
    conventions = {
        "bert-base-uncased": "ImplementationUnit",
        "fake-news-detector": "ApplicationOrTask",
        "distilroberta-base-finetuned-fake-news-detection": "ImplementationWithAppTask",
    }
    bad = [n for n, s in signatures.items() if parse_name(n).signature != s]
    bad += [n for n, c in conventions.items() if classify_convention(parse_name(n)) != c]
    rows = [line.split("\t") for line in (GOLDEN / "names.tsv").read_text().splitlines()]

    def render(ident):
        p = parse_name(ident)
        return [ident, p.signature, classify_convention(p), " ".join(f"{t}/{g}" for t, g in p.segments)]

    drift = [r[0] for r in rows if render(r[0]) != r]
    # a fresh interpreter with another hash seed must agree too
    script = ("import sys\nfrom ptmaudit.namelint import parse_name\n"
              "for n in sys.stdin.read().split():\n    print(n, parse_name(n).signature)")
    env = dict(os.environ, PYTHONHASHSEED="12345")
    out = subprocess.run([sys.executable, "-c", script], input="\n".join(r[0] for r in rows),
                         capture_output=True, text=True, env=env, check=True).stdout.splitlines()
    cross = [line for line, r in zip(out, rows) if line != f"{r[0]} {r[1]}"]
    verdict(8, not bad and len(rows) >= 50 and not drift and not cross and len(out) == len(rows),
            f"reference examples wrong={bad}; {len(rows)} regression ids, {len(drift)} drifted, {len(cross)} differ across processes")


# 9 -----------------------------------------------------------------------------


PIPELINE = """
import hashlib, sys
from ptmaudit.cli import main
root = sys.argv[1]
cfg = root + "/c.ini"
open(cfg, "w").write("[train]\\nepochs = 8\\nhidden = 32, 16, 8\\n[corpus]\\nfamilies = 4\\ninstances = 8\\n")
main(["gen", "--config", cfg, "--seed", "11", "--out", root + "/corpus"])
main(["aptm", root + "/corpus/00000.json", "--out", root + "/aptm.json"])
main(["features", root + "/corpus/00005.json", "--out", root + "/features.json"])
main(["train", root + "/corpus", "--config", cfg, "--out", root + "/model"])
main(["audit", root + "/corpus", "--model", root + "/model", "--format", "json", "--out", root + "/audit.json"])
main(["predict", root + "/corpus", "--model", root + "/model", "--out", root + "/predict.jsonl"])
"""


def _tree_digest(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and p.suffix != ".ini"}


def test_9_determinism(tmp_path, small_corpus):
    runs = []
    for i, hash_seed in enumerate(("0", "987")):
        root = tmp_path / f"run{i}"
        root.mkdir()
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        subprocess.run([sys.executable, "-c", PIPELINE, str(root)], env=env, check=True, capture_output=True)
        runs.append(_tree_digest(root))
    differing = sorted(k for k in runs[0] if runs[0][k] != runs[1].get(k))
    stages = {"aptm.json", "features.json", "model/vocab.txt", "model/model_type.mlp", "model/task.mlp",
              "model/metrics.json", "audit.json", "predict.jsonl"}

    # in-process: hashes, vectors and weights
    feats, vocab = prepare(small_corpus)
    h1 = [[layer.structural_hash for layer in build_aptm(g).layers] for g in small_corpus]
    h2 = [[layer.structural_hash for layer in build_aptm(g).layers] for g in small_corpus]
    v1 = np.stack([featurize(g, vocab).values for g in small_corpus])
    v2 = np.stack([featurize(g, vocab).values for g in small_corpus])
    ds = facet_dataset(feats, small_corpus, vocab, "model_type")
    cfg = TrainConfig(epochs=3, hidden=(32, 16, 8), seed=5)
    w1, w2 = train(ds, cfg)[0], train(ds, cfg)[0]
    same_weights = all(np.array_equal(a, b) for a, b in zip(w1.weights + w1.biases, w2.weights + w2.biases))
    ok = (stages <= set(runs[0]) and not differing and set(runs[0]) == set(runs[1])
          and h1 == h2 and np.array_equal(v1, v2) and same_weights and isinstance(w1, MlpModel))
    verdict(9, ok, f"{len(runs[0])} artifacts across 2 processes, differing={differing}; "
            f"in-process hashes/vectors/weights {'identical' if h1 == h2 and same_weights else 'differ'}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
