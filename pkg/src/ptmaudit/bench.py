"""Per-stage latency and batched throughput of the pipeline.

Model loading is not a stage here: documents are already on disk, so the
first stage measures document parsing (``ingest``) instead.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .aptm import build_aptm
from .features import FeatureVocab, export_feature_json, extract_ngrams, vectorize
from .graph_model import GraphDoc, parse_graph_doc, serialize_graph_doc
from .learner.mlp import MlpModel, predict

STAGES = ("ingest", "aptm", "export", "featurize", "predict")
TSV_COLUMNS = ("stage", "n", "mean_ms", "median_ms", "p95_ms", "throughput_per_s")


@dataclass
class StageTiming:
    stage: str
    samples_ms: list[float] = field(default_factory=list)
    throughput_per_s: float = 0.0
    rep_means_ms: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.samples_ms)

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.samples_ms) if self.samples_ms else 0.0

    @property
    def median_ms(self) -> float:
        return statistics.median(self.samples_ms) if self.samples_ms else 0.0

    @property
    def p95_ms(self) -> float:
        return float(np.percentile(self.samples_ms, 95)) if self.samples_ms else 0.0

    @property
    def rep_std_ms(self) -> float:
        return statistics.stdev(self.rep_means_ms) if len(self.rep_means_ms) > 1 else 0.0

    def record(self) -> dict:
        return {
            "stage": self.stage,
            "n": self.n,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "throughput_per_s": self.throughput_per_s,
            "rep_means_ms": self.rep_means_ms,
            "rep_std_ms": self.rep_std_ms,
        }


def _ms(t0: int, t1: int) -> float:
    return (t1 - t0) / 1e6


def _run_one(text: str, vocab: FeatureVocab, models: Sequence[MlpModel], sink: dict[str, list[float]] | None) -> None:
    clock = time.perf_counter_ns
    t0 = clock()
    g = parse_graph_doc(text)
    t1 = clock()
    a = build_aptm(g)
    t2 = clock()
    feat = extract_ngrams(a, vocab.parts)
    export_feature_json(feat)
    t3 = clock()
    fv = vectorize(feat, vocab)
    t4 = clock()
    for m in models:
        predict(m, fv.values)
    t5 = clock()
    if sink is not None:
        for stage, (a_, b_) in zip(STAGES, ((t0, t1), (t1, t2), (t2, t3), (t3, t4), (t4, t5))):
            sink[stage].append(_ms(a_, b_))


def bench(
    docs: Sequence[GraphDoc],
    models: Mapping[str, MlpModel],
    vocab: FeatureVocab,
    repetitions: int = 3,
    warmup: int = 1,
    batch: int = 256,
) -> list[StageTiming]:
    """Latency: every stage timed per model, ``repetitions`` passes after
    ``warmup`` untimed passes. Throughput: a separate pass that pushes the
    whole corpus through each stage, predicting on stacked batches."""
    if not docs:
        raise ValueError("nothing to benchmark")
    texts = [serialize_graph_doc(g) for g in docs]
    model_list = list(models.values())
    for _ in range(warmup):
        for text in texts:
            _run_one(text, vocab, model_list, None)

    timings = {s: StageTiming(s) for s in STAGES}
    for _ in range(repetitions):
        sink: dict[str, list[float]] = {s: [] for s in STAGES}
        for text in texts:
            _run_one(text, vocab, model_list, sink)
        for s in STAGES:
            timings[s].samples_ms.extend(sink[s])
            timings[s].rep_means_ms.append(statistics.fmean(sink[s]))

    clock = time.perf_counter
    n = len(texts)
    t = clock()
    graphs = [parse_graph_doc(x) for x in texts]
    timings["ingest"].throughput_per_s = n / (clock() - t)
    t = clock()
    aptms = [build_aptm(g) for g in graphs]
    timings["aptm"].throughput_per_s = n / (clock() - t)
    t = clock()
    feats = [extract_ngrams(a, vocab.parts) for a in aptms]
    for f in feats:
        export_feature_json(f)
    timings["export"].throughput_per_s = n / (clock() - t)
    t = clock()
    x = np.stack([vectorize(f, vocab).values for f in feats])
    timings["featurize"].throughput_per_s = n / (clock() - t)
    t = clock()
    for lo in range(0, n, batch):
        for m in model_list:
            predict(m, x[lo : lo + batch])
    timings["predict"].throughput_per_s = n / (clock() - t)
    return [timings[s] for s in STAGES]


def to_tsv(timings: Sequence[StageTiming]) -> str:
    lines = ["\t".join(TSV_COLUMNS)]
    for t in timings:
        lines.append(f"{t.stage}\t{t.n}\t{t.mean_ms:.4f}\t{t.median_ms:.4f}\t{t.p95_ms:.4f}\t{t.throughput_per_s:.1f}")
    return "\n".join(lines) + "\n"


def to_records(timings: Sequence[StageTiming]) -> str:
    return json.dumps([t.record() for t in timings], indent=2) + "\n"


__all__ = ["STAGES", "StageTiming", "bench", "to_records", "to_tsv"]
