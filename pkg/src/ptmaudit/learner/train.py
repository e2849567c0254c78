"""Seeded mini-batch training, evaluation metrics and k-fold cross-validation."""

from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses
from .mlp import DEFAULT_HIDDEN, SIGMOID, SOFTMAX, MlpModel, _forward, backward, normalize_rows, predict

logger = logging.getLogger(__name__)

LOSS_MODES = ("ce", "bce", "joint_supcon", "joint_multisupcon")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    step_size: int = 20
    gamma: float = 0.1
    batch_train: int = 256
    batch_eval: int = 32
    seed: int = 0
    loss_mode: str = "ce"
    tau: float = 0.1
    lam: float = 0.1
    c: float = 0.5
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    optimizer: str = "adam"
    normalize: bool = False
    contrastive_reduction: str = "mean"

    def __post_init__(self) -> None:
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError("c must lie in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if len(self.hidden) != 3:
            raise ValueError("hidden must list three widths")

    @property
    def multilabel(self) -> bool:
        return self.loss_mode in ("bce", "joint_multisupcon")


@dataclass
class LabeledDataset:
    """Rows of feature vectors with one label each, or one label set each
    when ``multilabel`` is true."""

    x: np.ndarray
    y: list
    multilabel: bool = False

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or len(self.y) != self.x.shape[0]:
            raise ValueError("x must be (n, d) with one label entry per row")
        if self.multilabel:
            self.y = [frozenset(v) for v in self.y]

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> LabeledDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.x[idx], [self.y[i] for i in idx], self.multilabel)

    def label_space(self) -> tuple[str, ...]:
        if self.multilabel:
            return tuple(sorted(set().union(*self.y)))
        return tuple(sorted(set(self.y)))


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)
    seconds: float = 0.0


def split_train_eval(ds: LabeledDataset, eval_fraction: float = 0.2, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_eval = int(round(len(ds) * eval_fraction))
    return ds.subset(np.sort(perm[n_eval:])), ds.subset(np.sort(perm[:n_eval]))


def _targets(ds: LabeledDataset, labels: tuple[str, ...]) -> np.ndarray:
    index = {label: i for i, label in enumerate(labels)}
    if ds.multilabel:
        t = np.zeros((len(ds), len(labels)))
        for r, s in enumerate(ds.y):
            for label in s:
                t[r, index[label]] = 1.0
        return t
    return np.array([index[v] for v in ds.y], dtype=np.int64)


def batch_loss_grad(m: MlpModel, x: np.ndarray, t: np.ndarray, cfg: TrainConfig):
    """Loss of one batch and its gradients for every weight and bias."""
    logits, cache = _forward(m, x)
    if cfg.multilabel:
        sup, g_logits = losses.bce_grad(logits, t)
    else:
        sup, g_logits = losses.cross_entropy_grad(logits, t)
    g_embed = None
    value = sup
    # a zero pre-activation has no direction; such rows sit out the contrastive term
    live = np.flatnonzero(np.linalg.norm(cache.embedding, axis=1) > 0.5) if cfg.loss_mode.startswith("joint") else []
    if len(live) >= 2:
        z, t_live = cache.embedding[live], t[live]
        if cfg.loss_mode == "joint_supcon":
            con, g_live = losses.supcon_grad(z, t_live, cfg.tau, cfg.contrastive_reduction)
        else:
            con, g_live = losses.multisupcon_grad(z, t_live, cfg.tau, cfg.c, cfg.contrastive_reduction)
        value = losses.joint_loss(sup, con, cfg.lam)
        g_logits = (1.0 - cfg.lam) * g_logits
        g_embed = np.zeros_like(cache.embedding)
        g_embed[live] = cfg.lam * g_live
    d_w, d_b = backward(m, cache, g_logits, g_embed)
    return value, d_w, d_b


class _Adam:
    def __init__(self, m: MlpModel, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in (*m.weights, *m.biases)]
        self.v = [np.zeros_like(p) for p in (*m.weights, *m.biases)]
        self.t = 0

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(ds: LabeledDataset, cfg: TrainConfig, vocab_hash: str | None = None) -> tuple[MlpModel, TrainReport]:
    """Train a fresh model. Deterministic for a given ``(ds, cfg)``."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if ds.multilabel != cfg.multilabel:
        raise ValueError(f"loss mode {cfg.loss_mode!r} does not match the dataset's label kind")
    labels = ds.label_space()
    model = MlpModel.init(
        ds.x.shape[1], labels, cfg.hidden,
        head=SIGMOID if cfg.multilabel else SOFTMAX,
        embed=cfg.loss_mode.startswith("joint"),
        seed=cfg.seed,
        vocab_hash=vocab_hash,
        normalize_inputs=cfg.normalize,
    )
    x = normalize_rows(ds.x) if cfg.normalize else ds.x
    t = _targets(ds, labels)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = _Adam(model) if cfg.optimizer == "adam" else None
    report = TrainReport()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.gamma ** (epoch // cfg.step_size)
        perm = rng.permutation(len(ds))
        total, seen = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_train):
            idx = perm[lo : lo + cfg.batch_train]
            value, d_w, d_b = batch_loss_grad(model, x[idx], t[idx], cfg)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {lo} (lr={lr:g})")
            params = [*model.weights, *model.biases]
            grads = [*d_w, *d_b]
            if opt is not None:
                opt.step(params, grads, lr)
            else:
                for p, g in zip(params, grads):
                    p -= lr * g
            total += value * len(idx)
            seen += len(idx)
        report.epoch_losses.append(total / seen)
        report.epoch_lr.append(lr)
    report.seconds = time.perf_counter() - start
    return model, report


# -- metrics --------------------------------------------------------------------


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    labels: tuple[str, ...] = ()
    confusion: np.ndarray | None = None
    topk: dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        out = {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}
        out.update({f"top@{k}": v for k, v in sorted(self.topk.items())})
        return out


def _macro(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> tuple[float, float, float]:
    prec = np.divide(tp, tp + fp, out=np.zeros_like(tp, dtype=np.float64), where=(tp + fp) > 0)
    rec = np.divide(tp, tp + fn, out=np.zeros_like(tp, dtype=np.float64), where=(tp + fn) > 0)
    f1 = np.divide(2 * prec * rec, prec + rec, out=np.zeros_like(prec), where=(prec + rec) > 0)
    return float(prec.mean()), float(rec.mean()), float(f1.mean())


def predict_batches(m: MlpModel, x: np.ndarray, batch: int = 32) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([predict(m, x[lo : lo + batch]) for lo in range(0, len(x), batch)]) if len(x) else np.zeros((0, m.dims[-1]))


def evaluate(m: MlpModel, ds: LabeledDataset, batch: int = 32, ks=(1, 2, 3)) -> Metrics:
    """Macro precision/recall/F1 over the labels present in truth or
    prediction. Eval labels the model never saw simply earn no credit."""
    probs = predict_batches(m, ds.x, batch)
    unseen = set(ds.label_space()) - set(m.labels)
    if unseen:
        logger.warning("evaluation labels unseen in training: %s", ", ".join(sorted(unseen)))
    order = np.argsort(-probs, axis=1, kind="stable")
    if not ds.multilabel:
        pred = [m.labels[i] for i in order[:, 0]]
        space = tuple(sorted(set(ds.y) | set(pred)))
        index = {label: i for i, label in enumerate(space)}
        conf = np.zeros((len(space), len(space)), dtype=np.int64)
        for truth, guess in zip(ds.y, pred):
            conf[index[truth], index[guess]] += 1
        tp = np.diag(conf).astype(np.float64)
        fp = conf.sum(axis=0) - tp
        fn = conf.sum(axis=1) - tp
        p, r, f = _macro(tp, fp, fn)
        topk = {k: float(np.mean([ds.y[i] in {m.labels[j] for j in order[i, :k]} for i in range(len(ds))])) for k in ks}
        return Metrics(float(tp.sum() / max(len(ds), 1)), p, r, f, space, conf, topk)

    # multi-label: predicted set = labels with p >= 0.5, never empty
    space = tuple(sorted(set(ds.label_space()) | set(m.labels)))
    index = {label: i for i, label in enumerate(space)}
    tp = np.zeros(len(space))
    fp = np.zeros(len(space))
    fn = np.zeros(len(space))
    exact = 0
    for i, truth in enumerate(ds.y):
        guess = {m.labels[j] for j in np.flatnonzero(probs[i] >= 0.5)} or {m.labels[order[i, 0]]}
        exact += guess == truth
        for label in guess & truth:
            tp[index[label]] += 1
        for label in guess - truth:
            fp[index[label]] += 1
        for label in truth - guess:
            fn[index[label]] += 1
    present = (tp + fp + fn) > 0
    p, r, f = _macro(tp[present], fp[present], fn[present])
    topk = {k: float(np.mean([bool(ds.y[i] & {m.labels[j] for j in order[i, :k]}) for i in range(len(ds))])) for k in ks}
    return Metrics(topk.get(1, exact / max(len(ds), 1)), p, r, f, space, None, topk)


@dataclass
class KFoldResult:
    folds: list[Metrics]

    def mean(self) -> dict[str, float]:
        keys = self.folds[0].as_dict().keys()
        return {k: statistics.fmean(f.as_dict()[k] for f in self.folds) for k in keys}

    def std(self) -> dict[str, float]:
        keys = self.folds[0].as_dict().keys()
        if len(self.folds) < 2:
            return {k: 0.0 for k in keys}
        # exact arithmetic, so identical folds give exactly zero
        return {k: statistics.stdev(f.as_dict()[k] for f in self.folds) for k in keys}

    def summary(self) -> dict[str, str]:
        mean, std = self.mean(), self.std()
        return {k: f"{100 * mean[k]:.1f}±{100 * std[k]:.1f}" for k in mean}


def kfold(ds: LabeledDataset, cfg: TrainConfig, k: int = 5, vocab_hash: str | None = None) -> KFoldResult:
    """Shuffle once with ``cfg.seed``, cut ``k`` disjoint folds, train on
    ``k - 1`` and evaluate on the held-out one."""
    if len(ds) < k:
        raise ValueError(f"need at least {k} rows for {k}-fold cross-validation")
    perm = np.random.default_rng(cfg.seed).permutation(len(ds))
    folds = np.array_split(perm, k)
    results = []
    for i, held in enumerate(folds):
        rest = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        model, _ = train(ds.subset(rest), replace(cfg, seed=cfg.seed + i), vocab_hash)
        results.append(evaluate(model, ds.subset(np.sort(held)), cfg.batch_eval))
    return KFoldResult(results)
