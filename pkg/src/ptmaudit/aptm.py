"""Rooted-DAG conversion, structural hashing and the canonical abstract
architecture.

Cycles are broken by dropping every edge that points back onto the open
DFS stack. Each layer then gets a 128-bit structural hash computed bottom-up
from its own canonical description and the wrapping sum of its children's
hashes. Because the sum is commutative, swapping branches never changes a
hash, and sorting by hash yields a branch-order-independent serialization.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .graph_model import GraphDoc, LayerNode, Params

logger = logging.getLogger(__name__)

HASH_BITS = 128
_MASK = (1 << HASH_BITS) - 1
INPUT_TOKEN = "[INPUT]"
OUTPUT_TOKEN = "[OUTPUT]"


class EmptyReachabilityError(ValueError):
    pass


def canonical_layer(op_type: str, params: Params) -> str:
    """Id-free description of a layer: ``Linear ['<in_features, 4096>', ...]``,
    or the bare op type when the layer has no parameters."""
    if not params:
        return op_type
    return param_signature(op_type, params)


def param_signature(op_type: str, params: Params) -> str:
    return f"{op_type} {[f'<{k}, {v}>' for k, v in params]}"


@lru_cache(maxsize=65536)
def _digest(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=16).digest(), "big")


def layer_hash(canonical: str, child_sum: int | None = None) -> int:
    """H(canonical) for a leaf, H(canonical || 0x00 || fold) otherwise."""
    data = canonical.encode("utf-8")
    if child_sum is not None:
        data += b"\x00" + (child_sum & _MASK).to_bytes(16, "big")
    return _digest(data)


def fold_hashes(hashes) -> int:
    total = 0
    for h in hashes:
        total = (total + h) & _MASK
    return total


@dataclass(frozen=True)
class Dag:
    nodes: tuple[LayerNode, ...]
    children: dict[str, tuple[str, ...]]
    roots: tuple[str, ...]
    outputs: tuple[str, ...] = ()
    back_edges: tuple[tuple[str, str], ...] = ()
    dropped: tuple[str, ...] = ()
    hashes: dict[str, int] | None = None

    @property
    def node_map(self) -> dict[str, LayerNode]:
        return {n.id: n for n in self.nodes}

    def edges(self) -> list[tuple[str, str]]:
        return [(a, b) for a in self.children for b in self.children[a]]


def to_rooted_dag(g: GraphDoc) -> Dag:
    """Depth-first traversal from the graph inputs (in node-id order,
    children in node-id order). An edge whose target is still open on the
    DFS stack closes a cycle and is recorded as a back edge. Nodes that no
    input reaches are dropped with a warning."""
    node_map = g.node_map
    succ: dict[str, set[str]] = {n: set() for n in node_map}
    for a, b in g.edges:
        succ[a].add(b)
    ordered = {k: sorted(v) for k, v in succ.items()}

    roots = sorted({r for r in g.graph_inputs if r in node_map})
    if not roots:
        raise EmptyReachabilityError("no node is reachable from any graph input")

    state: dict[str, int] = {}  # 1 open, 2 closed
    kept: dict[str, list[str]] = {}
    back: list[tuple[str, str]] = []
    for root in roots:
        if root in state:
            continue
        state[root] = 1
        kept[root] = []
        stack = [(root, iter(ordered[root]))]
        while stack:
            cur, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[cur] = 2
                stack.pop()
                continue
            s = state.get(nxt)
            if s == 1:
                back.append((cur, nxt))
            else:
                kept[cur].append(nxt)
                if s is None:
                    state[nxt] = 1
                    kept[nxt] = []
                    stack.append((nxt, iter(ordered[nxt])))

    dropped = tuple(n.id for n in g.nodes if n.id not in state)
    if dropped:
        logger.warning("dropping %d node(s) unreachable from graph inputs: %s", len(dropped), ", ".join(dropped[:5]))
    outputs = []
    for o in g.graph_outputs:
        if o in state and o not in outputs:
            outputs.append(o)
    return Dag(
        nodes=tuple(n for n in g.nodes if n.id in state),
        children={k: tuple(v) for k, v in kept.items()},
        roots=tuple(roots),
        outputs=tuple(outputs),
        back_edges=tuple(back),
        dropped=dropped,
    )


def _postorder(d: Dag) -> list[str]:
    order: list[str] = []
    seen: set[str] = set()
    for root in d.roots:
        if root in seen:
            continue
        seen.add(root)
        stack = [(root, iter(d.children[root]))]
        while stack:
            cur, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                order.append(cur)
                stack.pop()
            elif nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(d.children[nxt])))
    return order


def assign_hashes(d: Dag) -> Dag:
    node_map = d.node_map
    hashes: dict[str, int] = {}
    for node_id in _postorder(d):
        node = node_map[node_id]
        canon = canonical_layer(node.op_type, node.params)
        kids = d.children[node_id]
        if kids:
            hashes[node_id] = layer_hash(canon, fold_hashes(hashes[k] for k in kids))
        else:
            hashes[node_id] = layer_hash(canon)
    return replace(d, hashes=hashes)


@dataclass(frozen=True)
class AptmLayer:
    id: str
    op_type: str
    params: Params
    structural_hash: int
    child_hashes: tuple[int, ...]
    children: tuple[str, ...] = field(default=())

    @property
    def canonical(self) -> str:
        return canonical_layer(self.op_type, self.params)

    @property
    def hash_hex(self) -> str:
        return f"{self.structural_hash:032x}"


@dataclass(frozen=True)
class Aptm:
    """Layers are stored in sequence (DFS emission) order."""

    layers: tuple[AptmLayer, ...]
    hash_order: tuple[str, ...]
    sequence_order: tuple[str, ...]
    roots: tuple[str, ...]
    outputs: tuple[str, ...]

    @property
    def layer_map(self) -> dict[str, AptmLayer]:
        return {layer.id: layer for layer in self.layers}


def serialize_aptm(d: Dag) -> Aptm:
    if d.hashes is None:
        raise ValueError("serialize_aptm needs a Dag with assigned hashes")
    hashes = d.hashes
    node_map = d.node_map
    canon = {n.id: canonical_layer(n.op_type, n.params) for n in d.nodes}

    def key(node_id: str) -> tuple[int, str]:
        return (hashes[node_id], canon[node_id])

    sequence = _preorder(d, key)

    index = {node_id: i for i, node_id in enumerate(sequence)}
    hash_order = sorted(sequence, key=lambda n: (hashes[n], canon[n], index[n]))
    layers = []
    for node_id in sequence:
        node = node_map[node_id]
        kids = tuple(sorted(d.children[node_id], key=key))
        layers.append(
            AptmLayer(node_id, node.op_type, node.params, hashes[node_id], tuple(hashes[k] for k in kids), kids)
        )
    outputs = tuple(sorted(d.outputs, key=key))
    return Aptm(tuple(layers), tuple(hash_order), tuple(sequence), tuple(sorted(d.roots, key=key)), outputs)


def _preorder(d: Dag, key) -> list[str]:
    sequence: list[str] = []
    seen: set[str] = set()
    for root in sorted(d.roots, key=key):
        if root in seen:
            continue
        stack = [root]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            sequence.append(cur)
            for child in sorted(d.children[cur], key=key, reverse=True):
                if child not in seen:
                    stack.append(child)
    return sequence


def build_aptm(g: GraphDoc) -> Aptm:
    return serialize_aptm(assign_hashes(to_rooted_dag(g)))


def layer_sequence(a: Aptm) -> list[str]:
    layer_map = a.layer_map
    tokens = [INPUT_TOKEN] * len(a.roots)
    tokens.extend(layer_map[i].op_type for i in a.sequence_order)
    tokens.extend([OUTPUT_TOKEN] * len(a.outputs))
    return tokens


def aptm_to_dict(a: Aptm) -> dict:
    position = {layer.id: i for i, layer in enumerate(a.layers)}
    return {
        "layers": [{"op_type": layer.op_type, "params": dict(layer.params), "hash": layer.hash_hex} for layer in a.layers],
        "hash_order": [position[i] for i in a.hash_order],
        "sequence": " ".join(layer_sequence(a)),
    }


def export_aptm(a: Aptm) -> str:
    """Canonical JSON text. Node ids are deliberately absent, so isomorphic
    graphs export identically."""
    return json.dumps(aptm_to_dict(a), indent=2, ensure_ascii=False) + "\n"
