"""Four-layer fully connected classifier in plain numpy."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import l2_normalize, l2_normalize_backward, sigmoid, softmax

SOFTMAX = "softmax"
SIGMOID = "sigmoid"
DEFAULT_HIDDEN = (512, 256, 128)
_MAGIC = b"PTMMLP\x00\x00"
_FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


@dataclass
class MlpModel:
    """``dims`` is ``(input, h1, h2, h3, n_labels)``.

    When ``embed`` is set, :func:`forward` also returns the L2-normalized
    pre-activation of the third layer, which the contrastive losses use.
    """

    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    labels: tuple[str, ...]
    head: str = SOFTMAX
    embed: bool = False
    vocab_hash: str | None = None
    normalize_inputs: bool = False
    label_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.dims) != 5 or len(self.weights) != 4 or len(self.biases) != 4:
            raise ShapeError("an MlpModel has exactly four fully connected layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise ShapeError(f"layer {i} shapes {w.shape}/{b.shape} disagree with dims {self.dims}")
        if len(set(self.labels)) != len(self.labels) or len(self.labels) != self.dims[-1]:
            raise ShapeError("labels must be distinct and match the output width")
        if self.head not in (SOFTMAX, SIGMOID):
            raise ValueError(f"unknown head {self.head!r}")
        self.label_index = {label: i for i, label in enumerate(self.labels)}

    @property
    def embed_dim(self) -> int | None:
        return self.dims[3] if self.embed else None

    @classmethod
    def init(
        cls,
        n_in: int,
        labels,
        hidden=DEFAULT_HIDDEN,
        head: str = SOFTMAX,
        embed: bool = False,
        seed: int = 0,
        vocab_hash: str | None = None,
        normalize_inputs: bool = False,
    ) -> MlpModel:
        """He-initialized weights from a seeded generator; zero biases."""
        labels = tuple(labels)
        dims = (n_in, *hidden, len(labels))
        rng = np.random.default_rng(seed)
        weights = [rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1])) for i in range(4)]
        biases = [np.zeros(dims[i + 1]) for i in range(4)]
        return cls(dims, weights, biases, labels, head, embed, vocab_hash, normalize_inputs)

    def copy(self) -> MlpModel:
        return MlpModel(
            self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            self.labels, self.head, self.embed, self.vocab_hash, self.normalize_inputs,
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activations of each layer
    embedding: np.ndarray | None = None
    embed_norms: np.ndarray | None = None


def normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def _forward(m: MlpModel, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    inputs, pre = [], []
    h = x
    for i in range(4):
        inputs.append(h)
        a = h @ m.weights[i] + m.biases[i]
        pre.append(a)
        h = np.maximum(a, 0.0) if i < 3 else a
    cache = ForwardCache(inputs, pre)
    if m.embed:
        cache.embedding, cache.embed_norms = l2_normalize(pre[2])
    return h, cache


def forward(m: MlpModel, x) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Logits for one vector or an ``(n, d)`` batch; with an embedding head
    returns ``(logits, embedding)``."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.shape[-1] != m.dims[0]:
        raise ShapeError(f"input width {x.shape[-1]} does not match model input {m.dims[0]}")
    if m.normalize_inputs:
        x = normalize_rows(x)
    logits, cache = _forward(m, x)
    if m.embed:
        return logits, cache.embedding
    return logits


def backward(m: MlpModel, cache: ForwardCache, grad_logits: np.ndarray, grad_embedding: np.ndarray | None = None):
    """Exact backpropagation; returns per-layer ``(dW, db)`` lists."""
    d_w: list[np.ndarray] = [None] * 4  # type: ignore[list-item]
    d_b: list[np.ndarray] = [None] * 4  # type: ignore[list-item]
    g = grad_logits
    for i in range(3, -1, -1):
        if i < 3:
            g = g * (cache.pre[i] > 0)
            if i == 2 and grad_embedding is not None:
                g = g + l2_normalize_backward(cache.embedding, cache.embed_norms, grad_embedding)
        d_w[i] = cache.inputs[i].T @ g
        d_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ m.weights[i].T
    return d_w, d_b


def predict(m: MlpModel, x) -> np.ndarray:
    """Label probabilities: a distribution for the softmax head, independent
    per-label probabilities for the sigmoid head."""
    out = forward(m, x)
    logits = out[0] if isinstance(out, tuple) else out
    return softmax(logits) if m.head == SOFTMAX else sigmoid(logits)


def predict_topk(m: MlpModel, x, k: int) -> list[tuple[str, float]]:
    """The ``k`` most probable labels; ties keep label-dictionary order."""
    probs = predict(m, x)
    if probs.ndim != 1:
        raise ShapeError("predict_topk takes a single feature vector")
    order = np.argsort(-probs, kind="stable")[:k]
    return [(m.labels[i], float(probs[i])) for i in order]


# -- persistence ----------------------------------------------------------------


def save_model(m: MlpModel, path: str | Path) -> None:
    header = json.dumps(
        {"dims": list(m.dims), "labels": list(m.labels), "head": m.head, "embed": m.embed,
         "vocab_hash": m.vocab_hash, "normalize_inputs": m.normalize_inputs},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(header)))
        fh.write(header)
        for w, b in zip(m.weights, m.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path: str | Path) -> MlpModel:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a model file")
    version, header_len = struct.unpack_from("<II", data, len(_MAGIC))
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    offset = len(_MAGIC) + 8
    header = json.loads(data[offset : offset + header_len])
    offset += header_len
    dims = tuple(header["dims"])
    weights, biases = [], []
    for i in range(4):
        n = dims[i] * dims[i + 1]
        weights.append(np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(dims[i], dims[i + 1]).astype(np.float64))
        offset += 8 * n
        biases.append(np.frombuffer(data, dtype="<f8", count=dims[i + 1], offset=offset).astype(np.float64))
        offset += 8 * dims[i + 1]
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing weight data")
    return MlpModel(dims, weights, biases, tuple(header["labels"]), header["head"], header["embed"],
                    header["vocab_hash"], header.get("normalize_inputs", False))
