"""Command-line entry point: ``ptmaudit <command> ...``."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .aptm import build_aptm, export_aptm
from .audit import AuditPolicy, audit_corpus
from .bench import bench, to_records, to_tsv
from .corpus import CorpusSpec, gen_corpus
from .features import L_AND_P, L_ONLY, FeatureVocab, build_vocab, export_feature_json, export_sequence_json, extract_ngrams
from .graph_model import (
    GraphDoc,
    GraphParseError,
    GraphValidationError,
    IngestError,
    from_onnx,
    parse_graph_doc,
    serialize_graph_doc,
    validate_graph,
)
from .learner.mlp import load_model, predict, save_model
from .learner.train import TrainConfig, evaluate, kfold, train
from .namelint import classify_convention, default_lexicon, lint, parse_name
from .namelint.lexicon import Lexicon
from .namelint.parse import lint_json
from .pipeline import FACETS, facet_dataset, featurize, ngrams_of

log = logging.getLogger("ptmaudit")

VOCAB_FILE = "vocab.txt"


class UsageError(Exception):
    pass


# -- config -------------------------------------------------------------------


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        if not cfg.read(path, encoding="utf-8"):
            raise UsageError(f"cannot read config file {path}")
    return cfg


def _setting(args: argparse.Namespace, cfg: configparser.ConfigParser, section: str, name: str, default: Any, kind: Callable = str):
    """Flag value if given, else the config value, else ``default``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if cfg.has_option(section, name):
        raw = cfg.get(section, name)
        if kind is bool:
            return cfg.getboolean(section, name)
        if kind is tuple:
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return kind(raw)
    return default


def _train_config(args, cfg) -> TrainConfig:
    defaults = TrainConfig()
    values = {}
    for f in fields(TrainConfig):
        default = getattr(defaults, f.name)
        kind = tuple if isinstance(default, tuple) else type(default)
        values[f.name] = _setting(args, cfg, "train", f.name, default, kind)
    return TrainConfig(**values)


# -- io -------------------------------------------------------------------------


def read_graph(path: Path) -> GraphDoc:
    if path.suffix == ".onnx":
        return from_onnx(path.read_bytes())
    return parse_graph_doc(path.read_text(encoding="utf-8"))


def corpus_paths(paths: Sequence[str]) -> list[Path]:
    out: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix in (".json", ".onnx")))
        elif p.exists():
            out.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    return out


def _pmap(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def load_models(model_dir: Path, vocab_path: str | None = None):
    vocab = FeatureVocab.loads(Path(vocab_path or model_dir / VOCAB_FILE).read_text(encoding="utf-8"))
    models = {f: load_model(model_dir / f"{f}.mlp") for f in FACETS if (model_dir / f"{f}.mlp").exists()}
    if not models:
        raise UsageError(f"no facet models (*.mlp) in {model_dir}")
    return vocab, models


# -- commands -------------------------------------------------------------------


def cmd_ingest(args, cfg) -> int:
    g = read_graph(Path(args.graph))
    report = validate_graph(g)
    for f in report.findings:
        print(f"{args.graph}: {'error' if f.fatal else 'warning'}: {f.code}: {f.message}", file=sys.stderr)
    _emit(serialize_graph_doc(g), args.out)
    return 1 if report.fatal else 0


def cmd_aptm(args, cfg) -> int:
    g = read_graph(Path(args.graph))
    a = build_aptm(g)
    _emit(export_sequence_json(a, g.metadata) if args.sequence else export_aptm(a), args.out)
    return 0


def cmd_features(args, cfg) -> int:
    g = read_graph(Path(args.graph))
    parts = _setting(args, cfg, "features", "parts", L_AND_P)
    _emit(export_feature_json(extract_ngrams(build_aptm(g), parts)), args.out)
    return 0


def cmd_gen(args, cfg) -> int:
    spec = CorpusSpec(
        families=_setting(args, cfg, "corpus", "families", 20, int),
        instances=_setting(args, cfg, "corpus", "instances", 30, int),
        seed=_setting(args, cfg, "corpus", "seed", 0, int),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    docs = gen_corpus(spec)
    for i, g in enumerate(docs):
        (out / f"{i:05d}.json").write_text(serialize_graph_doc(g), encoding="utf-8")
    print(f"wrote {len(docs)} graph documents to {out}")
    return 0


def _features_for(paths: list[Path], parts: str, workers: int):
    docs = _pmap(read_graph, paths, workers)
    feats = _pmap(_ngrams_l if parts == L_ONLY else _ngrams_lp, docs, workers)
    return docs, feats


def _ngrams_l(g):
    return ngrams_of(g, L_ONLY)


def _ngrams_lp(g):
    return ngrams_of(g, L_AND_P)


def cmd_train(args, cfg) -> int:
    tcfg = _train_config(args, cfg)
    parts = _setting(args, cfg, "features", "parts", L_AND_P)
    facets = args.facet or list(FACETS)
    paths = corpus_paths(args.corpus)
    docs, feats = _features_for(paths, parts, args.workers)
    vocab = build_vocab(feats, parts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / VOCAB_FILE).write_text(vocab.dumps(), encoding="utf-8")

    # one shared 80/20 split over documents keeps facets comparable
    n = len(docs)
    perm = np.random.default_rng(tcfg.seed).permutation(n)
    n_eval = int(round(n * 0.2))
    eval_idx = sorted(perm[:n_eval].tolist())
    train_idx = sorted(perm[n_eval:].tolist())
    metrics: dict[str, Any] = {"seed": tcfg.seed, "eval": [docs[i].metadata.identifier for i in eval_idx], "facets": {}}
    for facet in facets:
        mode = "bce" if facet == "task" else "ce"
        if tcfg.loss_mode.startswith("joint"):
            mode = "joint_multisupcon" if facet == "task" else "joint_supcon"
        fcfg = replace(tcfg, loss_mode=mode)
        ds_train = facet_dataset([feats[i] for i in train_idx], [docs[i] for i in train_idx], vocab, facet)
        ds_eval = facet_dataset([feats[i] for i in eval_idx], [docs[i] for i in eval_idx], vocab, facet)
        if len(ds_train) == 0:
            log.warning("no declared %s labels; skipping", facet)
            continue
        model, report = train(ds_train, fcfg, vocab.digest)
        save_model(model, out / f"{facet}.mlp")
        m = evaluate(model, ds_eval, fcfg.batch_eval) if len(ds_eval) else None
        # wall-clock time goes to stderr so metrics.json stays reproducible
        print(f"{facet}: trained in {report.seconds:.1f}s", file=sys.stderr)
        entry: dict[str, Any] = {"n_train": len(ds_train), "n_eval": len(ds_eval), "final_loss": report.epoch_losses[-1]}
        if m is not None:
            entry["holdout"] = m.as_dict()
        if args.kfold:
            full = facet_dataset(feats, docs, vocab, facet)
            kf = kfold(full, fcfg, vocab_hash=vocab.digest)
            entry["kfold_mean"], entry["kfold_std"] = kf.mean(), kf.std()
            print(f"{facet}: 5-fold " + " ".join(f"{k}={v}" for k, v in kf.summary().items()))
        metrics["facets"][facet] = entry
        line = " ".join(f"{k}={v:.4f}" for k, v in (m.as_dict() if m else {}).items())
        print(f"{facet}: trained on {len(ds_train)}; holdout {line}")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args, cfg) -> int:
    vocab, models = load_models(Path(args.model), args.vocab)
    k = args.k
    lines = []
    for path in corpus_paths(args.graphs):
        g = read_graph(path)
        fv = featurize(g, vocab)
        record: dict[str, Any] = {"identifier": g.metadata.identifier, "oov_ratio": fv.oov_ratio}
        for facet, m in models.items():
            probs = predict(m, fv.values)
            order = np.argsort(-probs, kind="stable")[:k]
            record[facet] = [[m.labels[i], float(probs[i])] for i in order]
        lines.append(json.dumps(record, ensure_ascii=False))
    _emit("\n".join(lines) + ("\n" if lines else ""), args.out)
    return 0


def cmd_audit(args, cfg) -> int:
    vocab, models = load_models(Path(args.model), args.vocab)
    policy_values: dict[str, Any] = {}
    if cfg.has_section("audit"):
        for key in ("min_confidence", "oov_abstain_ratio"):
            if cfg.has_option("audit", key):
                policy_values[key] = cfg.getfloat("audit", key)
        if cfg.has_option("audit", "task_k"):
            policy_values["task_k"] = cfg.getint("audit", "task_k")
    if args.policy:
        policy_values.update(json.loads(Path(args.policy).read_text(encoding="utf-8")))
    policy = AuditPolicy.from_dict(policy_values)
    docs = []
    errors = []
    for path in corpus_paths(args.corpus):
        try:
            docs.append(read_graph(path))
        except (GraphParseError, GraphValidationError, IngestError) as exc:
            errors.append(f"{path}: {exc}")
    report = audit_corpus(docs, models, vocab, policy)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    text = report.to_json() if args.format == "json" else "\n".join(report.to_lines()) + "\n"
    _emit(text, args.out)
    summary = report.summary
    print("summary: " + json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 1 if report.has_inconsistency else 0


def cmd_name_parse(args, cfg) -> int:
    lex_path = args.lexicon or (cfg.get("names", "lexicon") if cfg.has_option("names", "lexicon") else None)
    lex = Lexicon.load(lex_path) if lex_path else default_lexicon()
    names = list(args.identifiers)
    if args.file:
        names.extend(line.strip() for line in Path(args.file).read_text(encoding="utf-8").splitlines() if line.strip())
    if not names:
        raise UsageError("no identifiers given")
    parses = [parse_name(n, lex) for n in names]
    if args.format == "json":
        _emit(lint_json(parses), args.out)
        return 0
    lines = []
    for p in parses:
        segs = " ".join(f"{t}/{g}" for t, g in p.segments)
        lines.append(f"{p.identifier}\t{p.signature}\t{classify_convention(p)}\t{segs}")
        lines.extend(f.line() for f in lint(p))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_bench(args, cfg) -> int:
    vocab, models = load_models(Path(args.model), args.vocab)
    docs = [read_graph(p) for p in corpus_paths(args.corpus)]
    reps = _setting(args, cfg, "bench", "reps", 3, int)
    timings = bench(docs, models, vocab, repetitions=reps)
    _emit(to_tsv(timings), args.out)
    if args.records:
        Path(args.records).write_text(to_records(timings), encoding="utf-8")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    common.add_argument("--config", default=None, help="INI config file; flags override it")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for batch stages")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ptmaudit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse and validate a graph document or ONNX file")
    p.add_argument("graph")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("aptm", parents=[common], help="emit the canonical abstract architecture")
    p.add_argument("graph")
    p.add_argument("--sequence", action="store_true", help="emit the layer-sequence document instead")
    p.set_defaults(func=cmd_aptm)

    p = sub.add_parser("features", parents=[common], help="emit n-gram features")
    p.add_argument("graph")
    p.add_argument("--parts", choices=(L_ONLY, L_AND_P), default=None)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic corpus")
    p.add_argument("--families", type=int, default=None)
    p.add_argument("--instances", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train facet classifiers on a corpus")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--facet", action="append", choices=FACETS)
    p.add_argument("--parts", choices=(L_ONLY, L_AND_P), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--loss-mode", dest="loss_mode", choices=("ce", "joint_supcon"), default=None,
                   help="ce trains CE/BCE; joint_supcon adds SupCon/MultiSupCon")
    p.add_argument("--kfold", action="store_true", help="also report 5-fold cross-validation")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict facet labels")
    p.add_argument("graphs", nargs="+")
    p.add_argument("--model", required=True, help="directory written by 'train'")
    p.add_argument("--vocab", default=None)
    p.add_argument("-k", type=int, default=3)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("audit", parents=[common], help="flag declared metadata that disagrees with predictions")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--policy", default=None, help="JSON audit policy")
    p.add_argument("--format", choices=("lines", "json"), default="lines")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("name-parse", parents=[common], help="tag identifiers with naming elements")
    p.add_argument("identifiers", nargs="*")
    p.add_argument("--file", default=None, help="file with one identifier per line")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--format", choices=("lines", "json"), default="lines")
    p.set_defaults(func=cmd_name_parse)

    p = sub.add_parser("bench", parents=[common], help="per-stage latency and throughput")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--records", default=None, help="also write JSON records here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (UsageError, GraphParseError, GraphValidationError, IngestError, ValueError, OSError) as exc:
        print(f"ptmaudit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
