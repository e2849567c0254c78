"""Neutral graph documents and their ingestion.

A :class:`GraphDoc` is the framework-independent description of a model's
computational graph: typed layer nodes, directed edges between them, the
nodes fed by graph-level inputs and the nodes producing graph-level
outputs, plus whatever metadata the model's publisher declared.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

Params = tuple[tuple[str, str], ...]

_TOP_KEYS = ("nodes", "edges", "inputs", "outputs", "metadata")
_NODE_KEYS = ("id", "op_type", "params")
_META_KEYS = ("identifier", "model_type", "architecture", "tasks")


class GraphParseError(ValueError):
    """Malformed graph-document text."""


class GraphValidationError(ValueError):
    """Well-formed document that violates a structural invariant."""


class IngestError(ValueError):
    """A serialized model container could not be read."""


def canonical_value(value: Any) -> str:
    """Render a parameter value in the fixed textual canon used for hashing
    and feature keys.

    >>> canonical_value((14, 14))
    '(14, 14)'
    >>> canonical_value(1e-05)
    '1e-05'
    >>> canonical_value([4096])
    '(4096,)'
    """
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "(" + ", ".join(canonical_value(v) for v in value) + ("," if len(value) == 1 else "") + ")"
    if value is None:
        return "None"
    raise TypeError(f"cannot canonicalize parameter value of type {type(value).__name__}")


@dataclass(frozen=True)
class LayerNode:
    id: str
    op_type: str
    params: Params = ()

    @classmethod
    def make(cls, id: str, op_type: str, params: Mapping[str, Any] | Iterable[tuple[str, Any]] = ()) -> LayerNode:
        items = params.items() if isinstance(params, Mapping) else params
        return cls(id, op_type, tuple((str(k), canonical_value(v)) for k, v in items))

    @property
    def param_dict(self) -> dict[str, str]:
        return dict(self.params)


@dataclass(frozen=True)
class DeclaredMetadata:
    identifier: str = ""
    model_type: str | None = None
    architecture: str | None = None
    tasks: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class GraphDoc:
    nodes: tuple[LayerNode, ...]
    edges: tuple[tuple[str, str], ...]
    graph_inputs: tuple[str, ...]
    graph_outputs: tuple[str, ...]
    metadata: DeclaredMetadata = field(default_factory=DeclaredMetadata)

    @property
    def node_map(self) -> dict[str, LayerNode]:
        return {n.id: n for n in self.nodes}


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    fatal: bool = True


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    @property
    def fatal(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.fatal)

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]


# --------------------------------------------------------------------------
# text form


def graph_doc_to_dict(g: GraphDoc) -> dict[str, Any]:
    meta = g.metadata
    return {
        "nodes": [{"id": n.id, "op_type": n.op_type, "params": dict(n.params)} for n in g.nodes],
        "edges": [[a, b] for a, b in g.edges],
        "inputs": list(g.graph_inputs),
        "outputs": list(g.graph_outputs),
        "metadata": {
            "identifier": meta.identifier,
            "model_type": meta.model_type,
            "architecture": meta.architecture,
            "tasks": sorted(meta.tasks),
        },
    }


def serialize_graph_doc(g: GraphDoc) -> str:
    return json.dumps(graph_doc_to_dict(g), indent=2, ensure_ascii=False) + "\n"


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise GraphParseError(f"{where}: {msg}")


def _check_keys(obj: Mapping[str, Any], allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    _require(not unknown, where, f"unknown key(s) {unknown}")


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    _require(isinstance(value, list), where, "expected an array of node ids")
    for i, item in enumerate(value):
        _require(isinstance(item, str), f"{where}[{i}]", "expected a string")
    return tuple(value)


def graph_doc_from_dict(doc: Any) -> GraphDoc:
    _require(isinstance(doc, dict), "document", "top level must be an object")
    _check_keys(doc, _TOP_KEYS, "document")
    for key in ("nodes", "edges", "inputs", "outputs"):
        _require(key in doc, "document", f"missing key {key!r}")

    nodes = []
    raw_nodes = doc["nodes"]
    _require(isinstance(raw_nodes, list), "nodes", "expected an array")
    for i, raw in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        _require(isinstance(raw, dict), where, "expected an object")
        _check_keys(raw, _NODE_KEYS, where)
        _require(isinstance(raw.get("id"), str), f"{where}.id", "expected a string")
        _require(isinstance(raw.get("op_type"), str), f"{where}.op_type", "expected a string")
        params = raw.get("params", {})
        _require(isinstance(params, dict), f"{where}.params", "expected an object")
        try:
            nodes.append(LayerNode.make(raw["id"], raw["op_type"], params))
        except TypeError as exc:
            raise GraphParseError(f"{where}.params: {exc}") from None

    edges = []
    raw_edges = doc["edges"]
    _require(isinstance(raw_edges, list), "edges", "expected an array")
    for i, raw in enumerate(raw_edges):
        ok = isinstance(raw, list) and len(raw) == 2 and all(isinstance(x, str) for x in raw)
        _require(ok, f"edges[{i}]", "expected a [from, to] pair of node ids")
        edges.append((raw[0], raw[1]))

    meta_raw = doc.get("metadata", {})
    _require(isinstance(meta_raw, dict), "metadata", "expected an object")
    _check_keys(meta_raw, _META_KEYS, "metadata")
    for key in ("model_type", "architecture"):
        _require(meta_raw.get(key) is None or isinstance(meta_raw[key], str), f"metadata.{key}", "expected a string or null")
    identifier = meta_raw.get("identifier", "")
    _require(isinstance(identifier, str), "metadata.identifier", "expected a string")
    tasks = meta_raw.get("tasks", [])
    _require(isinstance(tasks, list) and all(isinstance(t, str) for t in tasks), "metadata.tasks", "expected an array of strings")
    meta = DeclaredMetadata(identifier, meta_raw.get("model_type"), meta_raw.get("architecture"), frozenset(tasks))

    g = GraphDoc(
        tuple(nodes),
        tuple(edges),
        _str_list(doc["inputs"], "inputs"),
        _str_list(doc["outputs"], "outputs"),
        meta,
    )
    ids = {n.id for n in g.nodes}
    for i, (a, b) in enumerate(g.edges):
        for end in (a, b):
            if end not in ids:
                raise GraphValidationError(f"edges[{i}]: dangling edge endpoint {end!r}")
    return g


def parse_graph_doc(text: str) -> GraphDoc:
    """Parse graph-document text (JSON syntax) into a :class:`GraphDoc`.

    Raises :class:`GraphParseError` for malformed text or fields and
    :class:`GraphValidationError` for edges naming unknown nodes.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return graph_doc_from_dict(doc)


# --------------------------------------------------------------------------
# validation


def validate_graph(g: GraphDoc) -> ValidationReport:
    findings: list[Finding] = []
    counts = Counter(n.id for n in g.nodes)
    for node_id, n in sorted(counts.items()):
        if n > 1:
            findings.append(Finding("duplicate-id", f"node id {node_id!r} appears {n} times"))
    for n in g.nodes:
        if not n.op_type:
            findings.append(Finding("empty-op-type", f"node {n.id!r} has an empty op_type"))
        keys = [k for k, _ in n.params]
        if len(set(keys)) != len(keys):
            findings.append(Finding("duplicate-param", f"node {n.id!r} repeats a parameter name"))
    ids = set(counts)
    for a, b in g.edges:
        for end in (a, b):
            if end not in ids:
                findings.append(Finding("dangling-edge", f"edge ({a!r}, {b!r}) references unknown node {end!r}"))
    for label, group in (("input", g.graph_inputs), ("output", g.graph_outputs)):
        if not group:
            findings.append(Finding(f"no-{label}s", f"graph declares no {label} nodes"))
        for node_id in group:
            if node_id not in ids:
                findings.append(Finding(f"bad-{label}", f"graph {label} {node_id!r} is not a node"))

    # back edges never affect which nodes are reachable, so plain BFS suffices
    adj: dict[str, list[str]] = defaultdict(list)
    for a, b in g.edges:
        adj[a].append(b)
    seen = {i for i in g.graph_inputs if i in ids}
    queue = deque(sorted(seen))
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt in ids and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    for node_id in sorted(ids - seen):
        findings.append(Finding("unreachable", f"node {node_id!r} is unreachable from every graph input", fatal=False))
    return ValidationReport(tuple(findings))


# --------------------------------------------------------------------------
# ONNX subset


def _float32_text(x: float) -> str:
    return repr(float(str(np.float32(x))))


def _onnx_attr_value(attr: Any, node_name: str) -> str:
    from onnx import AttributeProto

    t = attr.type
    if t == AttributeProto.INT:
        return canonical_value(int(attr.i))
    if t == AttributeProto.FLOAT:
        return _float32_text(attr.f)
    if t == AttributeProto.STRING:
        return attr.s.decode("utf-8", errors="replace")
    if t == AttributeProto.INTS:
        return canonical_value(tuple(int(v) for v in attr.ints))
    if t == AttributeProto.FLOATS:
        return "(" + ", ".join(_float32_text(v) for v in attr.floats) + ("," if len(attr.floats) == 1 else "") + ")"
    if t == AttributeProto.STRINGS:
        return canonical_value(tuple(s.decode("utf-8", errors="replace") for s in attr.strings))
    if t == AttributeProto.TENSOR:
        return f"tensor{canonical_value(tuple(int(d) for d in attr.t.dims))}"
    if t in (AttributeProto.GRAPH, AttributeProto.GRAPHS):
        logger.warning("node %s: subgraph attribute %r is not unfolded; kept as a marker", node_name, attr.name)
        return "subgraph"
    raise IngestError(f"node {node_name!r}: unsupported attribute {attr.name!r} of type {t}")


def from_onnx(data: bytes, metadata: DeclaredMetadata | None = None) -> GraphDoc:
    """Build a GraphDoc from serialized ONNX ``ModelProto`` (or bare
    ``GraphProto``) bytes.

    Only operator names, attributes and tensor names are consumed.
    Initializers and ``Constant`` outputs are treated as weights, so a node
    reading only weights has no incoming data edge.
    """
    import onnx
    from google.protobuf.message import DecodeError

    graph = None
    try:
        model = onnx.ModelProto()
        model.ParseFromString(data)
        if model.HasField("graph"):
            graph = model.graph
    except DecodeError:
        model = None
    if graph is None:
        try:
            candidate = onnx.GraphProto()
            candidate.ParseFromString(data)
        except DecodeError as exc:
            raise IngestError(f"not a serialized ONNX model or graph: {exc}") from None
        if not candidate.node:
            raise IngestError("container holds no graph nodes")
        graph = candidate

    weights = {init.name for init in graph.initializer}
    weights.update(init.values.name for init in graph.sparse_initializer)
    graph_in = [v.name for v in graph.input if v.name not in weights]
    graph_out = {v.name for v in graph.output}

    nodes: list[LayerNode] = []
    producers: dict[str, str] = {}
    consumed: list[tuple[str, list[str]]] = []
    used_ids: set[str] = set()
    out_nodes: list[str] = []
    for index, proto in enumerate(graph.node):
        if proto.op_type == "Constant":
            weights.update(proto.output)
            continue
        if not proto.op_type:
            raise IngestError(f"node #{index} has no operator name")
        node_id = proto.name or f"{proto.op_type}_{index}"
        if node_id in used_ids:
            node_id = f"{node_id}#{index}"
        used_ids.add(node_id)
        params = tuple((a.name, _onnx_attr_value(a, node_id)) for a in proto.attribute)
        nodes.append(LayerNode(node_id, proto.op_type, params))
        for tensor in proto.output:
            if tensor:
                producers[tensor] = node_id
            if tensor in graph_out and node_id not in out_nodes:
                out_nodes.append(node_id)
        consumed.append((node_id, [t for t in proto.input if t]))

    edges: list[tuple[str, str]] = []
    roots: list[str] = []
    graph_in_set = set(graph_in)
    for node_id, tensors in consumed:
        for tensor in tensors:
            if tensor in producers:
                edge = (producers[tensor], node_id)
                if edge not in edges:
                    edges.append(edge)
            elif tensor in graph_in_set:
                if node_id not in roots:
                    roots.append(node_id)
            elif tensor not in weights:
                logger.warning("node %s: no producer for tensor %r; edge omitted", node_id, tensor)

    return GraphDoc(tuple(nodes), tuple(edges), tuple(roots), tuple(out_nodes), metadata or DeclaredMetadata(graph.name))
