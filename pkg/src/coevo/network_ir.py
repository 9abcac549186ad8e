"""Typed layer graphs for assembled networks.

A network is a DAG of layers, each with an operation kind, an attribute
dict, and an ordered inbound list. The functions here validate graphs,
infer tensor shapes, count trainable parameters, produce the canonical
JSON interchange encoding, and apply post-hoc width scaling.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

FORMAT_VERSION = "1"

OP_INPUT = "input"
OP_OUTPUT = "output"
OP_CONV1D = "conv1d"
OP_CONV2D = "conv2d"
OP_DENSE = "dense"
OP_LSTM = "lstm"
OP_GRU = "gru"
OP_DROPOUT = "dropout"
OP_MAX_POOL = "max_pool"
OP_FLATTEN = "flatten"
OP_CONCAT = "concat_merge"

OP_KINDS = frozenset(
    {
        OP_INPUT,
        OP_OUTPUT,
        OP_CONV1D,
        OP_CONV2D,
        OP_DENSE,
        OP_LSTM,
        OP_GRU,
        OP_DROPOUT,
        OP_MAX_POOL,
        OP_FLATTEN,
        OP_CONCAT,
    }
)

# Kinds that own trainable weights and therefore may carry a shared_key.
PARAMETERIZED_KINDS = frozenset({OP_CONV1D, OP_CONV2D, OP_DENSE, OP_LSTM, OP_GRU})

# Kinds that count toward effective depth in descriptor computations.
COMPUTE_KINDS = frozenset({OP_CONV1D, OP_CONV2D, OP_DENSE, OP_LSTM, OP_GRU, OP_DROPOUT})

_REQUIRED_ATTRS = {
    OP_CONV1D: ("filters", "kernel_size", "activation", "initializer"),
    OP_CONV2D: ("filters", "kernel_size", "activation", "initializer"),
    OP_DENSE: ("units", "activation", "initializer"),
    OP_LSTM: ("units", "activation", "initializer"),
    OP_GRU: ("units", "activation", "initializer"),
    OP_DROPOUT: ("rate",),
    OP_MAX_POOL: ("pool_size",),
}

ROLE_FEATURE = "feature"
ROLE_TEMPORAL = "temporal"
ROLE_SPATIAL = "spatial"

_ROLES_BY_RANK = {
    1: (ROLE_FEATURE,),
    2: (ROLE_TEMPORAL, ROLE_FEATURE),
    3: (ROLE_SPATIAL, ROLE_SPATIAL, ROLE_FEATURE),
}


class ShapeError(ValueError):
    """Shape or attribute inference failed; carries the offending layer id."""

    def __init__(self, layer_id: str, message: str):
        super().__init__(f"layer {layer_id!r}: {message}")
        self.layer_id = layer_id


class InterchangeError(ValueError):
    """Malformed or unsupported interchange payload."""


@dataclass
class LayerSpec:
    id: str
    op_kind: str
    attrs: dict = field(default_factory=dict)
    inbound: list[str] = field(default_factory=list)

    def copy(self) -> "LayerSpec":
        return LayerSpec(self.id, self.op_kind, dict(self.attrs), list(self.inbound))


@dataclass
class NetworkGraph:
    layers: list[LayerSpec]
    inputs: list[str]
    outputs: list[str]
    globals_table: dict = field(default_factory=dict)

    def copy(self) -> "NetworkGraph":
        return NetworkGraph(
            [l.copy() for l in self.layers],
            list(self.inputs),
            list(self.outputs),
            dict(self.globals_table),
        )

    def layer_map(self) -> dict[str, LayerSpec]:
        return {l.id: l for l in self.layers}


@dataclass(frozen=True)
class TensorShape:
    dims: tuple[int, ...]
    roles: tuple[str, ...]

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def features(self) -> int:
        return self.dims[-1]


def shape_for_rank(dims: tuple[int, ...]) -> TensorShape:
    roles = _ROLES_BY_RANK.get(len(dims))
    if roles is None:
        raise ValueError(f"unsupported tensor rank {len(dims)}")
    return TensorShape(tuple(int(d) for d in dims), roles)


def topological_layers(net: NetworkGraph) -> list[LayerSpec]:
    """Deterministic topological order: ready layers resolve by smallest id."""
    by_id = net.layer_map()
    indeg = {l.id: len(l.inbound) for l in net.layers}
    consumers: dict[str, list[str]] = {l.id: [] for l in net.layers}
    for l in net.layers:
        for src in l.inbound:
            if src in consumers:
                consumers[src].append(l.id)
    heap = [lid for lid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[LayerSpec] = []
    while heap:
        lid = heapq.heappop(heap)
        order.append(by_id[lid])
        for nxt in consumers[lid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, nxt)
    if len(order) != len(net.layers):
        raise ValueError("layer graph contains a cycle")
    return order


def _attr_violations(layer: LayerSpec) -> list[str]:
    problems = []
    for key in _REQUIRED_ATTRS.get(layer.op_kind, ()):
        if key not in layer.attrs:
            problems.append(f"layer {layer.id!r} missing attr {key!r}")
    a = layer.attrs
    if layer.op_kind in (OP_CONV1D, OP_CONV2D):
        if "filters" in a and (not isinstance(a["filters"], int) or a["filters"] < 1):
            problems.append(f"layer {layer.id!r} filters must be a positive int")
        if "kernel_size" in a and (not isinstance(a["kernel_size"], int) or a["kernel_size"] < 1):
            problems.append(f"layer {layer.id!r} kernel_size must be a positive int")
    if layer.op_kind in (OP_DENSE, OP_LSTM, OP_GRU):
        if "units" in a and (not isinstance(a["units"], int) or a["units"] < 1):
            problems.append(f"layer {layer.id!r} units must be a positive int")
    if layer.op_kind == OP_DROPOUT and "rate" in a:
        if not isinstance(a["rate"], (int, float)) or not 0.0 <= a["rate"] < 1.0:
            problems.append(f"layer {layer.id!r} rate must lie in [0, 1)")
    if layer.op_kind == OP_MAX_POOL and "pool_size" in a:
        if not isinstance(a["pool_size"], int) or a["pool_size"] < 2:
            problems.append(f"layer {layer.id!r} pool_size must be an int >= 2")
    if "shared_key" in a and layer.op_kind not in PARAMETERIZED_KINDS:
        problems.append(f"layer {layer.id!r} shared_key on a weightless op")
    return problems


def _structural_violations(net: NetworkGraph) -> list[str]:
    problems: list[str] = []
    ids = [l.id for l in net.layers]
    if len(ids) != len(set(ids)):
        problems.append("duplicate layer ids")
        return problems
    by_id = net.layer_map()

    for name, group in (("inputs", net.inputs), ("outputs", net.outputs)):
        for lid in group:
            if lid not in by_id:
                problems.append(f"{name} entry {lid!r} not a layer")
    if problems:
        return problems
    if not net.inputs:
        problems.append("network has no input layer")
    if not net.outputs:
        problems.append("network has no output layer")

    input_set, output_set = set(net.inputs), set(net.outputs)
    for l in net.layers:
        if l.op_kind not in OP_KINDS:
            problems.append(f"layer {l.id!r} has unknown op_kind {l.op_kind!r}")
        if l.op_kind == OP_INPUT and l.id not in input_set:
            problems.append(f"input layer {l.id!r} not listed in inputs")
        if l.op_kind == OP_OUTPUT and l.id not in output_set:
            problems.append(f"output layer {l.id!r} not listed in outputs")
        if l.id in input_set and (l.op_kind != OP_INPUT or l.inbound):
            problems.append(f"layer {l.id!r} must be an input op with no inbound")
        if l.id in output_set and l.op_kind != OP_OUTPUT:
            problems.append(f"layer {l.id!r} listed as output but is {l.op_kind!r}")
        for src in l.inbound:
            if src not in by_id:
                problems.append(f"layer {l.id!r} inbound {src!r} missing")
            elif src in output_set:
                problems.append(f"output layer {src!r} feeds {l.id!r}")
        if len(set(l.inbound)) != len(l.inbound):
            problems.append(f"layer {l.id!r} has duplicate inbound entries")
        problems.extend(_attr_violations(l))
    if problems:
        return problems

    try:
        order = topological_layers(net)
    except ValueError:
        problems.append("cycle detected in layer graph")
        return problems

    # Every layer must sit on some input-to-output path.
    reached: set[str] = set(net.inputs)
    for l in order:
        if l.inbound and any(src in reached for src in l.inbound):
            reached.add(l.id)
    reaching: set[str] = set(net.outputs)
    for l in reversed(order):
        if l.id in reaching:
            reaching.update(l.inbound)
    for l in net.layers:
        if l.id not in reached:
            problems.append(f"layer {l.id!r} unreachable from any input")
        elif l.id not in reaching:
            problems.append(f"layer {l.id!r} feeds no output")
    return problems


_SINGLE_INBOUND = frozenset(
    {OP_CONV1D, OP_CONV2D, OP_DENSE, OP_LSTM, OP_GRU, OP_DROPOUT, OP_MAX_POOL, OP_FLATTEN, OP_OUTPUT}
)


def _layer_shape(layer: LayerSpec, inbound: list[TensorShape], fallback_input) -> TensorShape:
    kind = layer.op_kind
    if kind == OP_INPUT:
        dims = layer.attrs.get("shape", fallback_input)
        if dims is None:
            raise ShapeError(layer.id, "input layer has no shape and none was supplied")
        return shape_for_rank(tuple(dims))

    if kind in _SINGLE_INBOUND and len(inbound) != 1:
        raise ShapeError(layer.id, f"{kind} expects exactly 1 inbound, got {len(inbound)}")
    if kind == OP_CONCAT and len(inbound) < 2:
        raise ShapeError(layer.id, "concat_merge expects at least 2 inbound")

    if kind == OP_OUTPUT or kind == OP_DROPOUT:
        return inbound[0]
    if kind == OP_CONV1D:
        s = inbound[0]
        if s.rank != 2:
            raise ShapeError(layer.id, f"conv1d needs a rank-2 input, got rank {s.rank}")
        return TensorShape((s.dims[0], layer.attrs["filters"]), s.roles)
    if kind == OP_CONV2D:
        s = inbound[0]
        if s.rank != 3:
            raise ShapeError(layer.id, f"conv2d needs a rank-3 input, got rank {s.rank}")
        return TensorShape((s.dims[0], s.dims[1], layer.attrs["filters"]), s.roles)
    if kind == OP_DENSE:
        s = inbound[0]
        if s.rank != 1:
            raise ShapeError(layer.id, f"dense needs a rank-1 input, got rank {s.rank}")
        return TensorShape((layer.attrs["units"],), s.roles)
    if kind in (OP_LSTM, OP_GRU):
        s = inbound[0]
        if s.rank != 2:
            raise ShapeError(layer.id, f"{kind} needs a rank-2 input, got rank {s.rank}")
        return TensorShape((s.dims[0], layer.attrs["units"]), s.roles)
    if kind == OP_MAX_POOL:
        s = inbound[0]
        if s.rank < 2:
            raise ShapeError(layer.id, "max_pool needs a spatial or temporal axis")
        p = layer.attrs["pool_size"]
        dims = tuple(
            math.ceil(d / p) if role != ROLE_FEATURE else d for d, role in zip(s.dims, s.roles)
        )
        if any(d < 1 for d in dims):
            raise ShapeError(layer.id, f"pooling collapses shape {s.dims} below 1")
        return TensorShape(dims, s.roles)
    if kind == OP_FLATTEN:
        s = inbound[0]
        return TensorShape((math.prod(s.dims),), (ROLE_FEATURE,))
    if kind == OP_CONCAT:
        first = inbound[0]
        for s in inbound[1:]:
            if s.rank != first.rank or s.roles != first.roles or s.dims[:-1] != first.dims[:-1]:
                raise ShapeError(
                    layer.id,
                    f"concat_merge inputs disagree: {first.dims} vs {s.dims}",
                )
        total = sum(s.features for s in inbound)
        return TensorShape(first.dims[:-1] + (total,), first.roles)
    raise ShapeError(layer.id, f"unknown op_kind {kind!r}")


def infer_shapes(
    net: NetworkGraph, input_shape: tuple[int, ...] | None = None
) -> dict[str, TensorShape]:
    """Propagate shapes from inputs to outputs; raises ShapeError on conflict."""
    shapes: dict[str, TensorShape] = {}
    for layer in topological_layers(net):
        inbound = [shapes[src] for src in layer.inbound]
        shapes[layer.id] = _layer_shape(layer, inbound, input_shape)
    return shapes


def _layer_param_count(layer: LayerSpec, in_features: int) -> int:
    kind = layer.op_kind
    if kind == OP_DENSE:
        u = layer.attrs["units"]
        return in_features * u + u
    if kind == OP_CONV1D:
        f, k = layer.attrs["filters"], layer.attrs["kernel_size"]
        return k * in_features * f + f
    if kind == OP_CONV2D:
        f, k = layer.attrs["filters"], layer.attrs["kernel_size"]
        return k * k * in_features * f + f
    if kind == OP_LSTM:
        h = layer.attrs["units"]
        return 4 * ((in_features + h) * h + h)
    if kind == OP_GRU:
        h = layer.attrs["units"]
        return 3 * ((in_features + h) * h + h)
    return 0


def _sharing_signature(layer: LayerSpec, in_features: int) -> tuple:
    keys = ("filters", "kernel_size", "units")
    return (layer.op_kind, in_features) + tuple(layer.attrs.get(k) for k in keys)


def _count_with_shapes(
    order: list[LayerSpec], shapes: dict[str, TensorShape]
) -> int:
    total = 0
    seen: set[tuple] = set()
    for layer in order:
        if layer.op_kind not in PARAMETERIZED_KINDS:
            continue
        in_features = shapes[layer.inbound[0]].features
        key = layer.attrs.get("shared_key")
        if key is not None:
            group = (key, _sharing_signature(layer, in_features))
            if group in seen:
                continue
            seen.add(group)
        total += _layer_param_count(layer, in_features)
    return total


def count_parameters(net: NetworkGraph, input_shape: tuple[int, ...] | None = None) -> int:
    """Total trainable parameters.

    Layers carrying the same ``shared_key`` reuse one parameter block and are
    counted once, provided their kind, fan-in, and weight-defining attrs
    agree; instances whose shapes disagree cannot physically share weights
    and fall back to their own block. The result depends only on the graph,
    never on the layer list ordering.
    """
    order = topological_layers(net)
    shapes: dict[str, TensorShape] = {}
    for layer in order:
        shapes[layer.id] = _layer_shape(layer, [shapes[s] for s in layer.inbound], input_shape)
    return _count_with_shapes(order, shapes)


def validate_dag(net: NetworkGraph, input_shape: tuple[int, ...] | None = None) -> list[str]:
    """All structural violations, then shape and sharing violations when the
    structure is sound enough to run inference. Empty list means valid."""
    problems = _structural_violations(net)
    if problems:
        return problems
    try:
        count_parameters(net, input_shape)
    except (ShapeError, ValueError) as exc:
        problems.append(str(exc))
    return problems


@dataclass
class NetworkAnalysis:
    violations: list[str]
    shapes: dict[str, TensorShape]
    param_count: int | None

    @property
    def ok(self) -> bool:
        return not self.violations


def analyze_network(
    net: NetworkGraph, input_shape: tuple[int, ...] | None = None
) -> NetworkAnalysis:
    """One pass that validates, infers shapes, and counts parameters."""
    problems = _structural_violations(net)
    if problems:
        return NetworkAnalysis(problems, {}, None)
    try:
        order = topological_layers(net)
        shapes: dict[str, TensorShape] = {}
        for layer in order:
            shapes[layer.id] = _layer_shape(
                layer, [shapes[s] for s in layer.inbound], input_shape
            )
    except (ShapeError, ValueError) as exc:
        return NetworkAnalysis([str(exc)], {}, None)
    try:
        params = _count_with_shapes(order, shapes)
    except ShapeError as exc:
        return NetworkAnalysis([str(exc)], shapes, None)
    return NetworkAnalysis([], shapes, params)


def network_to_dict(net: NetworkGraph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "layers": [
            {"id": l.id, "op_kind": l.op_kind, "attrs": dict(l.attrs), "inbound": list(l.inbound)}
            for l in topological_layers(net)
        ],
        "inputs": sorted(net.inputs),
        "outputs": sorted(net.outputs),
        "globals": dict(net.globals_table),
    }


def serialize_network(net: NetworkGraph) -> bytes:
    """Canonical interchange bytes: topologically ordered layers, sorted keys,
    no whitespace. Equal graphs serialize to identical bytes."""
    return json.dumps(network_to_dict(net), sort_keys=True, separators=(",", ":")).encode("utf-8")


def network_from_dict(data: dict) -> NetworkGraph:
    if not isinstance(data, dict):
        raise InterchangeError("interchange payload must be a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise InterchangeError(f"unsupported format_version {version!r}")
    try:
        layers = [
            LayerSpec(l["id"], l["op_kind"], dict(l.get("attrs", {})), list(l.get("inbound", [])))
            for l in data["layers"]
        ]
        return NetworkGraph(
            layers, list(data["inputs"]), list(data["outputs"]), dict(data.get("globals", {}))
        )
    except (KeyError, TypeError) as exc:
        raise InterchangeError(f"malformed interchange payload: {exc}") from exc


def deserialize_network(raw: bytes | str) -> NetworkGraph:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"interchange payload is not valid JSON: {exc}") from exc
    return network_from_dict(data)


def augment_filters(net: NetworkGraph, scale: float) -> NetworkGraph:
    """Scale every conv filter count and dense width by ``scale``, rounding up."""
    if scale < 1.0:
        raise ValueError("augmentation scale must be >= 1")
    out = net.copy()
    for layer in out.layers:
        if layer.op_kind in (OP_CONV1D, OP_CONV2D):
            layer.attrs["filters"] = math.ceil(layer.attrs["filters"] * scale)
        elif layer.op_kind == OP_DENSE:
            layer.attrs["units"] = math.ceil(layer.attrs["units"] * scale)
    return out
