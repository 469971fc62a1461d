"""Graph compression passes.

Each pass maps a valid graph to a valid graph and never mutates its
input.  ``optimize`` chains passes and measures, per pass, the node
count, the serialized size, and the worst output deviation on a fixed
random probe batch, so a size win is never taken on faith.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .bundle import bundle_bytes
from .errors import OptimizeError
from .graph import CompGraph, Node, _eval_node, forward, infer_shapes
from .quantization import dequantize, quantize_array
from .tensor import Tensor, as_f32

PROBE_COUNT = 16
PROBE_SEED = 7


@dataclass(frozen=True)
class PassReport:
    """What one pass did: size and accuracy cost, side by side."""

    name: str
    nodes_before: int
    nodes_after: int
    bytes_before: int
    bytes_after: int
    max_deviation: float

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "bytes_before": self.bytes_before,
            "bytes_after": self.bytes_after,
            "max_deviation": self.max_deviation,
        }


def fold_batch_norm(graph: CompGraph) -> CompGraph:
    """Fold each conv2d -> batch_norm pair into the convolution.

    With s = gamma / sqrt(variance + epsilon), the fused kernel is
    k * s (per output channel) and the fused bias beta + s*(b - mean).
    A pair is folded only when the conv feeds nothing but that
    batch_norm; otherwise the conv's other consumers would see changed
    values.
    """
    consumers = graph.consumers()
    folded_weights: Dict[str, dict] = {}
    redirect: Dict[str, str] = {}  # dropped bn id -> producing conv id
    for node in graph.nodes:
        if node.op != "batch_norm":
            continue
        src = graph.node(node.inputs[0])
        if src.op != "conv2d" or len(consumers[src.id]) != 1:
            continue
        variance = node.weights["variance"].data
        epsilon = float(node.attrs["epsilon"])
        scale = node.weights["gamma"].data / np.sqrt(variance + epsilon)
        kernel = src.weights["kernel"].data * scale  # broadcasts over c_out
        if "bias" in src.weights:
            base_bias = src.weights["bias"].data
        else:
            base_bias = np.zeros(kernel.shape[3], dtype=np.float64)
        bias = node.weights["beta"].data + scale * (base_bias - node.weights["mean"].data)
        folded_weights[src.id] = {
            "kernel": Tensor._wrap(as_f32(kernel)),
            "bias": Tensor._wrap(as_f32(bias)),
        }
        redirect[node.id] = src.id

    if not redirect:
        return graph
    nodes = []
    for node in graph.nodes:
        if node.id in redirect:
            continue
        if node.id in folded_weights:
            node = replace(node, weights=folded_weights[node.id], quant={})
        if any(i in redirect for i in node.inputs):
            node = replace(node, inputs=tuple(redirect.get(i, i) for i in node.inputs))
        nodes.append(node)
    return CompGraph(
        nodes,
        input_id=graph.input_id,
        bottleneck_id=redirect.get(graph.bottleneck_id, graph.bottleneck_id),
        output_id=redirect.get(graph.output_id, graph.output_id),
        metadata=graph.metadata,
    )


def fold_constants(graph: CompGraph) -> CompGraph:
    """Precompute nodes whose every input is a constant.

    A foldable node is replaced in place by a constant carrying its
    output, keeping its id so consumers are untouched.  Values are
    computed in float64 and stored exactly, so downstream outputs do
    not move.  Orphaned feeder constants are left for dead-node
    elimination.
    """
    pinned = {graph.input_id, graph.bottleneck_id, graph.output_id}
    values: Dict[str, Tensor] = {}
    for node in graph.nodes:
        if node.op == "constant":
            values[node.id] = node.weights["value"]
    changed = False
    nodes = []
    for node in graph.nodes:
        foldable = (
            node.op not in ("input", "constant")
            and node.id not in pinned
            and node.inputs
            and all(i in values for i in node.inputs)
        )
        if foldable:
            out = _eval_node(node, [values[i] for i in node.inputs])
            folded = Node(id=node.id, op="constant", weights={"value": out})
            values[node.id] = out
            nodes.append(folded)
            changed = True
        else:
            nodes.append(node)
    if not changed:
        return graph
    return CompGraph(
        nodes,
        input_id=graph.input_id,
        bottleneck_id=graph.bottleneck_id,
        output_id=graph.output_id,
        metadata=graph.metadata,
    )


def eliminate_dead_nodes(graph: CompGraph) -> CompGraph:
    """Drop nodes that cannot influence the output."""
    live = {graph.output_id}
    stack = [graph.output_id]
    while stack:
        for parent in graph.node(stack.pop()).inputs:
            if parent not in live:
                live.add(parent)
                stack.append(parent)
    live.add(graph.input_id)
    nodes = [n for n in graph.nodes if n.id in live]
    if len(nodes) == len(graph.nodes):
        return graph
    return CompGraph(
        nodes,
        input_id=graph.input_id,
        bottleneck_id=graph.bottleneck_id,
        output_id=graph.output_id,
        metadata=graph.metadata,
    )


def quantize_weights(graph: CompGraph, bits: int = 8) -> CompGraph:
    """Quantize every weight tensor to int8 with a per-tensor affine map.

    Weights already carrying a quantization descriptor are left alone;
    requantizing dequantized values would only add error.
    """
    if bits != 8:
        raise OptimizeError(f"unsupported quantization width {bits}; only 8-bit is supported")
    nodes = []
    changed = False
    for node in graph.nodes:
        todo = [name for name in node.weights if name not in node.quant]
        if not todo:
            nodes.append(node)
            continue
        weights = dict(node.weights)
        quant = dict(node.quant)
        for name in todo:
            qt = quantize_array(weights[name].data)
            quant[name] = qt
            weights[name] = Tensor._wrap(dequantize(qt))
        nodes.append(replace(node, weights=weights, quant=quant))
        changed = True
    if not changed:
        return graph
    return CompGraph(
        nodes,
        input_id=graph.input_id,
        bottleneck_id=graph.bottleneck_id,
        output_id=graph.output_id,
        metadata=graph.metadata,
    )


PASSES: Dict[str, Callable[[CompGraph], CompGraph]] = {
    "fold_batch_norm": fold_batch_norm,
    "fold_constants": fold_constants,
    "eliminate_dead_nodes": eliminate_dead_nodes,
    "quantize_weights": quantize_weights,
}
DEFAULT_PASSES = tuple(PASSES)


def probe_batch(graph: CompGraph, count: int = PROBE_COUNT, seed: int = PROBE_SEED) -> Tensor:
    """Seeded uniform[-1, 1) batch matching the graph's input shape."""
    if count < 1:
        raise OptimizeError("probe batch needs at least one sample")
    h, w, c = graph.input_shape
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-1.0, 1.0, size=(count, h, w, c)))


def _placeholder_labels(graph: CompGraph) -> list:
    k = infer_shapes(graph)[graph.output_id][-1]
    return [f"class{i:03d}" for i in range(k)]


def optimize(
    graph: CompGraph,
    passes: Optional[Sequence[str]] = None,
    labels=None,
    probe_count: int = PROBE_COUNT,
    probe_seed: int = PROBE_SEED,
) -> tuple[CompGraph, list]:
    """Apply passes in order, returning the final graph and one report per pass.

    Serialized sizes are measured on full bundles; when no labels are
    given, placeholder class names sized to the output width stand in
    so byte counts stay comparable.
    """
    names = list(passes) if passes is not None else list(DEFAULT_PASSES)
    for name in names:
        if name not in PASSES:
            known = ", ".join(PASSES)
            raise OptimizeError(f"unknown pass {name!r}; available passes: {known}")
    if not names:
        return graph, []
    label_list = list(labels) if labels is not None else _placeholder_labels(graph)
    probes = probe_batch(graph, probe_count, probe_seed)
    current = graph
    current_out = forward(current, probes).data
    current_bytes = len(bundle_bytes(current, label_list))
    reports = []
    for name in names:
        nxt = PASSES[name](current)
        nxt_out = forward(nxt, probes).data
        nxt_bytes = len(bundle_bytes(nxt, label_list))
        reports.append(
            PassReport(
                name=name,
                nodes_before=len(current.nodes),
                nodes_after=len(nxt.nodes),
                bytes_before=current_bytes,
                bytes_after=nxt_bytes,
                max_deviation=float(np.max(np.abs(nxt_out - current_out))),
            )
        )
        current, current_out, current_bytes = nxt, nxt_out, nxt_bytes
    return current, reports
