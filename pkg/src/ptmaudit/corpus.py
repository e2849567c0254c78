"""Seeded synthetic model corpus.

Each family owns a private op palette and a block motif (plain chain,
residual, parallel branches merged by concatenation, or a recurrent block
with a back edge). Instances within a family vary depth, widths and a few
optional layers; each instance also gets one of the family's task heads.
Labels follow the family and head: ``model_type`` is the family,
``architecture`` is family x head and ``tasks`` come from the head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import DeclaredMetadata, GraphDoc, LayerNode

BODY_OPS = (
    "Conv2d", "Conv1d", "BatchNorm2d", "BatchNorm1d", "LayerNorm", "GroupNorm", "InstanceNorm2d",
    "ReLU", "GELU", "SiLU", "Tanh", "Sigmoid", "Hardswish", "LeakyReLU", "PReLU", "ELU", "Mish",
    "Softplus", "Dropout", "MaxPool2d", "AvgPool2d", "Linear", "MultiheadAttention", "matmul",
    "mul", "div", "sub", "reshape", "permute", "transpose", "flatten", "mean", "pow", "sqrt",
    "softmax", "GRUCell", "LSTMCell", "Upsample", "ConvTranspose2d", "PixelShuffle", "ZeroPad2d",
    "Embedding", "RMSNorm", "contiguous", "chunk", "getitem", "unsqueeze", "expand",
)
MOTIFS = ("chain", "residual", "branch", "recurrent")
FAMILY_NAMES = (
    "aster", "basalt", "cobalt", "dune", "ember", "fjord", "garnet", "heron", "iris", "jasper",
    "kestrel", "lumen", "marlin", "nimbus", "onyx", "pylon", "quartz", "rune", "sable", "tundra",
    "umber", "vesper", "willow", "xenon", "yarrow", "zephyr",
)
# head name -> (op sequence, tasks)
HEADS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "ForSequenceClassification": (("Tanh", "Linear"), ("text-classification",)),
    "ForTokenClassification": (("Dropout", "Linear"), ("token-classification", "ner")),
    "ForQuestionAnswering": (("Linear", "split", "squeeze"), ("question-answering",)),
    "ForCausalLM": (("Linear", "log_softmax"), ("text-generation", "text2text-generation")),
    "ForImageClassification": (("AdaptiveAvgPool2d", "flatten", "Linear"), ("image-classification",)),
    "ForSegmentation": (("ConvTranspose2d", "interpolate"), ("image-segmentation", "depth-estimation")),
}

_WIDTHS = (32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024)
_PARAMS = {
    "Conv2d": ("in_channels", "out_channels", "kernel_size", "stride", "padding"),
    "Conv1d": ("in_channels", "out_channels", "kernel_size"),
    "ConvTranspose2d": ("in_channels", "out_channels", "kernel_size", "stride"),
    "BatchNorm2d": ("num_features", "eps", "momentum"),
    "BatchNorm1d": ("num_features", "eps"),
    "LayerNorm": ("normalized_shape", "eps", "elementwise_affine"),
    "RMSNorm": ("normalized_shape", "eps"),
    "GroupNorm": ("num_groups", "num_channels", "eps"),
    "InstanceNorm2d": ("num_features", "affine"),
    "Linear": ("in_features", "out_features"),
    "MultiheadAttention": ("embed_dim", "num_heads", "dropout"),
    "Dropout": ("p", "inplace"),
    "MaxPool2d": ("kernel_size", "stride"),
    "AvgPool2d": ("kernel_size",),
    "LeakyReLU": ("negative_slope",),
    "GRUCell": ("input_size", "hidden_size"),
    "LSTMCell": ("input_size", "hidden_size"),
    "Embedding": ("num_embeddings", "embedding_dim"),
    "Upsample": ("scale_factor", "mode"),
    "PixelShuffle": ("upscale_factor",),
    "AdaptiveAvgPool2d": ("output_size",),
}


class CorpusSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    families: int = 20
    instances: int = 30
    seed: int = 0
    min_blocks: int = 2
    max_blocks: int = 5
    heads_per_family: int = 2

    def __post_init__(self) -> None:
        if self.families < 2 or self.instances < 2:
            raise CorpusSpecError("a corpus needs at least 2 families and 2 instances per family")
        if self.families > len(FAMILY_NAMES):
            raise CorpusSpecError(f"at most {len(FAMILY_NAMES)} families are supported")
        if not 1 <= self.min_blocks <= self.max_blocks:
            raise CorpusSpecError("need 1 <= min_blocks <= max_blocks")
        if not 1 <= self.heads_per_family <= len(HEADS):
            raise CorpusSpecError(f"heads_per_family must lie in [1, {len(HEADS)}]")


@dataclass(frozen=True)
class FamilyTemplate:
    name: str
    motif: str
    stem: str
    block: tuple[str, ...]
    optional: str
    widths: tuple[int, ...]
    heads: tuple[str, ...]

    @property
    def model_type(self) -> str:
        return self.name

    def architecture(self, head: str) -> str:
        return self.name.capitalize() + head


def _param_value(name: str, rng: np.random.Generator, width: int):
    if name in ("kernel_size", "stride", "padding"):
        k = int(rng.choice((1, 3, 5, 7))) if name == "kernel_size" else int(rng.choice((1, 2)))
        return (k, k)
    if name in ("eps",):
        return float(rng.choice((1e-05, 1e-06, 1e-12)))
    if name in ("momentum", "p", "dropout", "negative_slope"):
        return float(rng.choice((0.0, 0.1, 0.2)))
    if name in ("elementwise_affine", "affine", "inplace"):
        return bool(rng.integers(2))
    if name in ("num_heads", "num_groups"):
        return int(rng.choice((4, 8, 12, 16)))
    if name in ("scale_factor", "upscale_factor"):
        return int(rng.choice((2, 4)))
    if name == "mode":
        return str(rng.choice(("nearest", "bilinear")))
    if name == "output_size":
        return (1, 1)
    if name == "normalized_shape":
        return (width,)
    if name == "num_embeddings":
        return int(rng.choice((30522, 50257, 32000)))
    return width


def family_templates(spec: CorpusSpec) -> list[FamilyTemplate]:
    rng = np.random.default_rng([spec.seed, 0xFA])
    head_names = sorted(HEADS)
    templates: list[FamilyTemplate] = []
    seen_blocks: set[frozenset[str]] = set()
    for f in range(spec.families):
        while True:
            size = int(rng.integers(3, 6))
            block = tuple(str(op) for op in rng.choice(BODY_OPS, size=size, replace=False))
            stem = str(rng.choice(BODY_OPS))
            optional = str(rng.choice([op for op in BODY_OPS if op not in block]))
            signature = frozenset((stem, *block))
            if signature not in seen_blocks:
                seen_blocks.add(signature)
                break
        widths = tuple(int(w) for w in np.sort(rng.choice(_WIDTHS, size=3, replace=False)))
        heads = tuple(sorted(str(h) for h in rng.choice(head_names, size=spec.heads_per_family, replace=False)))
        templates.append(FamilyTemplate(FAMILY_NAMES[f], MOTIFS[f % len(MOTIFS)], stem, block, optional, widths, heads))
    return templates


class _Builder:
    def __init__(self, rng: np.random.Generator, width: int):
        self.rng = rng
        self.width = width
        self.nodes: list[LayerNode] = []
        self.edges: list[tuple[str, str]] = []

    def add(self, op: str, *parents: str) -> str:
        node_id = f"n{len(self.nodes):04d}"
        params = [(name, _param_value(name, self.rng, self.width)) for name in _PARAMS.get(op, ())]
        self.nodes.append(LayerNode.make(node_id, op, params))
        self.edges.extend((p, node_id) for p in parents)
        return node_id

    def chain(self, ops, parent: str) -> tuple[str, str]:
        first = cur = self.add(ops[0], parent)
        for op in ops[1:]:
            cur = self.add(op, cur)
        return first, cur


def _instance(t: FamilyTemplate, head: str, index: int, rng: np.random.Generator, spec: CorpusSpec) -> GraphDoc:
    width = int(rng.choice(t.widths))
    b = _Builder(rng, width)
    stem = b.add(t.stem)
    cur = stem
    n_blocks = int(rng.integers(spec.min_blocks, spec.max_blocks + 1))
    for _ in range(n_blocks):
        ops = list(t.block)
        if rng.random() < 0.3:
            ops.insert(int(rng.integers(1, len(ops) + 1)), t.optional)
        if t.motif == "chain":
            _, cur = b.chain(ops, cur)
        elif t.motif == "residual":
            _, last = b.chain(ops, cur)
            cur = b.add("add", last, cur)
        elif t.motif == "branch":
            cut = max(1, len(ops) // 2)
            _, left = b.chain(ops[:cut], cur)
            _, right = b.chain(ops[cut:] or ops[:1], cur)
            cur = b.add("cat", left, right)
        else:
            first, last = b.chain(ops, cur)
            b.edges.append((last, first))
            cur = last
    head_ops, tasks = HEADS[head]
    _, out = b.chain(head_ops, cur)
    meta = DeclaredMetadata(
        identifier=f"synth/{t.name}-{head.lower()}-{index:03d}",
        model_type=t.model_type,
        architecture=t.architecture(head),
        tasks=frozenset(tasks),
    )
    return GraphDoc(tuple(b.nodes), tuple(b.edges), (stem,), (out,), meta)


def gen_corpus(spec: CorpusSpec) -> list[GraphDoc]:
    """``families * instances`` documents, grouped by family."""
    docs = []
    for f, t in enumerate(family_templates(spec)):
        for i in range(spec.instances):
            rng = np.random.default_rng([spec.seed, f, i])
            head = t.heads[i % len(t.heads)]
            docs.append(_instance(t, head, i, rng, spec))
    return docs
