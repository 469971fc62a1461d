"""Computation-graph IR, inception-style builders, and forward evaluation.

A graph is an ordered list of nodes in topological order.  Nodes carry
an op kind, attributes, and optional constant weight tensors.  One node
is the designated input, one the softmax output, and one the bottleneck
whose activations feed the retrained classifier head.

Weights created by the builders are rounded to float32-representable
values so that bundle serialization round-trips bit-exactly; evaluation
still runs in double precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import ops
from .errors import GraphError, ShapeError
from .ops import BatchNormParams, ConvSpec, axis_geometry
from .quantization import QuantizedTensor
from .tensor import Tensor, as_f32

OP_KINDS = (
    "input",
    "constant",
    "conv2d",
    "batch_norm",
    "relu",
    "pool",
    "global_avg_pool",
    "concat",
    "fully_connected",
    "softmax",
)

# Weight names each op kind must carry ("bias" on conv2d is optional).
_REQUIRED_WEIGHTS = {
    "conv2d": ("kernel",),
    "batch_norm": ("mean", "variance", "gamma", "beta"),
    "fully_connected": ("W", "b"),
    "constant": ("value",),
}

BATCH_NORM_EPSILON = 1e-3


@dataclass(frozen=True, eq=False)
class Node:
    """One graph node: op kind + attributes + optional constant weights.

    `quant` records the int8 storage form for weights that have been
    quantized; the matching entry in `weights` holds the dequantized
    float values used for compute.
    """

    id: str
    op: str
    inputs: tuple[str, ...] = ()
    attrs: Mapping = field(default_factory=dict)
    weights: Mapping[str, Tensor] = field(default_factory=dict)
    quant: Mapping[str, QuantizedTensor] = field(default_factory=dict)

    def __post_init__(self):
        if self.op not in OP_KINDS:
            raise GraphError(f"unknown op kind {self.op!r} at node {self.id!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "attrs", dict(self.attrs))
        object.__setattr__(self, "weights", dict(self.weights))
        object.__setattr__(self, "quant", dict(self.quant))

    def param_count(self) -> int:
        return sum(t.size for t in self.weights.values())


class CompGraph:
    """Immutable acyclic computation graph with designated input,
    bottleneck, and softmax output nodes."""

    def __init__(
        self,
        nodes: Sequence[Node],
        input_id: str,
        bottleneck_id: str,
        output_id: str,
        metadata: Mapping[str, str],
    ) -> None:
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.input_id = input_id
        self.bottleneck_id = bottleneck_id
        self.output_id = output_id
        self.metadata: dict[str, str] = {str(k): str(v) for k, v in metadata.items()}
        self._by_id = {n.id: n for n in self.nodes}
        self._validate()

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise GraphError(f"no node with id {node_id!r}") from None

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for src in n.inputs:
                out[src].append(n.id)
        return out

    def param_count(self) -> int:
        return sum(n.param_count() for n in self.nodes)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        """(height, width, channels) accepted by the input node."""
        return tuple(self.node(self.input_id).attrs["shape"])

    def _validate(self) -> None:
        if len(self._by_id) != len(self.nodes):
            raise GraphError("duplicate node ids")
        seen: set[str] = set()
        input_nodes = []
        for n in self.nodes:
            for src in n.inputs:
                if src not in self._by_id:
                    raise GraphError(f"node {n.id!r} references missing node {src!r}")
                if src not in seen:
                    raise GraphError(
                        f"node {n.id!r} input {src!r} does not precede it "
                        "(nodes must be topologically ordered)"
                    )
            if n.op == "input":
                input_nodes.append(n.id)
                if n.inputs:
                    raise GraphError("input node cannot have inputs")
            elif n.op == "constant":
                if n.inputs:
                    raise GraphError(f"constant node {n.id!r} cannot have inputs")
            elif n.op == "concat":
                if not n.inputs:
                    raise GraphError(f"concat node {n.id!r} needs at least one input")
            elif len(n.inputs) != 1:
                raise GraphError(f"node {n.id!r} ({n.op}) must have exactly one input")
            for name in _REQUIRED_WEIGHTS.get(n.op, ()):
                if name not in n.weights:
                    raise GraphError(f"node {n.id!r} ({n.op}) missing weight {name!r}")
            seen.add(n.id)
        if len(input_nodes) != 1:
            raise GraphError(f"graph must have exactly one input node, got {input_nodes}")
        if self.input_id != input_nodes[0]:
            raise GraphError("input_id does not name the input node")
        for label, nid in (("bottleneck", self.bottleneck_id), ("output", self.output_id)):
            if nid not in self._by_id:
                raise GraphError(f"{label} id {nid!r} names no node")
        if self.node(self.output_id).op != "softmax":
            raise GraphError("output node must be a softmax")
        fwd = self.consumers()
        if self.output_id not in self._reachable(self.input_id, fwd, skip=None):
            raise GraphError("output is not reachable from the input")
        if self.bottleneck_id not in (self.input_id, self.output_id):
            reach = self._reachable(self.input_id, fwd, skip=self.bottleneck_id)
            if self.output_id in reach:
                raise GraphError(
                    f"bottleneck {self.bottleneck_id!r} is not on every "
                    "input-to-output path"
                )

    def _reachable(
        self, start: str, fwd: Mapping[str, list[str]], skip: Optional[str]
    ) -> set[str]:
        seen = {start}
        stack = [start]
        while stack:
            for nxt in fwd[stack.pop()]:
                if nxt != skip and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen


def _eval_node(node: Node, inputs: list[Tensor]) -> Tensor:
    op = node.op
    if op == "constant":
        return node.weights["value"]
    if op == "conv2d":
        spec = ConvSpec(
            kernel=node.weights["kernel"],
            bias=node.weights.get("bias"),
            stride=tuple(node.attrs["stride"]),
            padding=node.attrs["padding"],
        )
        return ops.conv2d(inputs[0], spec)
    if op == "batch_norm":
        params = BatchNormParams(
            mean=node.weights["mean"],
            variance=node.weights["variance"],
            gamma=node.weights["gamma"],
            beta=node.weights["beta"],
            epsilon=float(node.attrs["epsilon"]),
        )
        return ops.batch_norm(inputs[0], params)
    if op == "relu":
        return ops.relu(inputs[0])
    if op == "pool":
        return ops.pool(
            inputs[0],
            node.attrs["mode"],
            tuple(node.attrs["window"]),
            tuple(node.attrs["stride"]),
            node.attrs["padding"],
        )
    if op == "global_avg_pool":
        return ops.global_avg_pool(inputs[0])
    if op == "concat":
        return ops.concat_channels(inputs)
    if op == "fully_connected":
        return ops.fully_connected(inputs[0], node.weights["W"], node.weights["b"])
    if op == "softmax":
        return ops.softmax(inputs[0])
    raise GraphError(f"cannot evaluate op {op!r}")


def _evaluate(graph: CompGraph, input: Tensor, stop_id: str) -> Tensor:
    if input.data.ndim != 4:
        raise GraphError(
            f"graph input {graph.input_id!r}: expected a 4-D tensor, got {input.shape}"
        )
    expected = graph.input_shape
    if tuple(input.shape[1:]) != expected:
        raise GraphError(
            f"graph input {graph.input_id!r}: expected [*, {expected[0]}, "
            f"{expected[1]}, {expected[2]}], got {list(input.shape)}"
        )
    # Evaluate only the ancestry of the stop node.
    needed: set[str] = set()
    stack = [stop_id]
    while stack:
        nid = stack.pop()
        if nid in needed:
            continue
        needed.add(nid)
        stack.extend(graph.node(nid).inputs)
    values: dict[str, Tensor] = {}
    for node in graph.nodes:
        if node.id not in needed:
            continue
        if node.op == "input":
            values[node.id] = input
        else:
            values[node.id] = _eval_node(node, [values[i] for i in node.inputs])
        if node.id == stop_id:
            break
    return values[stop_id]


def forward(graph: CompGraph, input: Tensor) -> Tensor:
    """Run the full graph; returns softmax probabilities [batch, classes]."""
    return _evaluate(graph, input, graph.output_id)


def bottleneck(graph: CompGraph, input: Tensor) -> Tensor:
    """Evaluate only up to the bottleneck node (penultimate features)."""
    return _evaluate(graph, input, graph.bottleneck_id)


def infer_shapes(graph: CompGraph, batch: int = 1) -> dict[str, tuple[int, ...]]:
    """Static output shape per node for a given batch size."""
    shapes: dict[str, tuple[int, ...]] = {}
    for n in graph.nodes:
        if n.op == "input":
            h, w, c = n.attrs["shape"]
            shapes[n.id] = (batch, h, w, c)
        elif n.op == "constant":
            shapes[n.id] = n.weights["value"].shape
        elif n.op == "conv2d":
            b, h, w, _ = shapes[n.inputs[0]]
            kh, kw, _, cout = n.weights["kernel"].shape
            sh, sw = n.attrs["stride"]
            oh, _, _ = axis_geometry(h, kh, sh, n.attrs["padding"])
            ow, _, _ = axis_geometry(w, kw, sw, n.attrs["padding"])
            shapes[n.id] = (b, oh, ow, cout)
        elif n.op == "pool":
            b, h, w, c = shapes[n.inputs[0]]
            wh, ww = n.attrs["window"]
            sh, sw = n.attrs["stride"]
            oh, _, _ = axis_geometry(h, wh, sh, n.attrs["padding"])
            ow, _, _ = axis_geometry(w, ww, sw, n.attrs["padding"])
            shapes[n.id] = (b, oh, ow, c)
        elif n.op == "global_avg_pool":
            b, _, _, c = shapes[n.inputs[0]]
            shapes[n.id] = (b, c)
        elif n.op == "concat":
            first = shapes[n.inputs[0]]
            channels = sum(shapes[i][3] for i in n.inputs)
            shapes[n.id] = (*first[:3], channels)
        elif n.op == "fully_connected":
            b = shapes[n.inputs[0]][0]
            shapes[n.id] = (b, n.weights["W"].shape[1])
        else:  # relu, batch_norm, softmax keep their input shape
            shapes[n.id] = shapes[n.inputs[0]]
    return shapes


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvStep:
    """One convolution stage inside an inception branch."""

    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: str = "same"


@dataclass(frozen=True)
class PoolStep:
    """One pooling stage inside an inception branch."""

    mode: str = "avg"
    window: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: str = "same"


BranchStep = Union[ConvStep, PoolStep]


class GraphBuilder:
    """Appends nodes with seeded He initialization and tracks shapes."""

    def __init__(self, seed: int = 0) -> None:
        self._rng = np.random.default_rng(seed)
        self._nodes: list[Node] = []
        self._shapes: dict[str, tuple[int, ...]] = {}  # (h, w, c) or (d,)
        self._counter = 0
        self._input_id: Optional[str] = None

    def _next_id(self, prefix: str) -> str:
        nid = f"{prefix}{self._counter}"
        self._counter += 1
        return nid

    def _append(self, node: Node, shape: tuple[int, ...]) -> str:
        self._nodes.append(node)
        self._shapes[node.id] = shape
        return node.id

    def shape_of(self, node_id: str) -> tuple[int, ...]:
        return self._shapes[node_id]

    def add_input(self, height: int, width: int, channels: int) -> str:
        if self._input_id is not None:
            raise GraphError("graph already has an input node")
        nid = self._next_id("input")
        self._input_id = nid
        return self._append(
            Node(nid, "input", attrs={"shape": (height, width, channels)}),
            (height, width, channels),
        )

    def _feature_shape(self, src: str) -> tuple[int, int, int]:
        shape = self._shapes[src]
        if len(shape) != 3:
            raise GraphError(f"node {src!r} does not produce a spatial feature map")
        return shape

    def add_conv(
        self,
        src: str,
        out_channels: int,
        kernel: tuple[int, int] = (3, 3),
        stride: tuple[int, int] = (1, 1),
        padding: str = "same",
        batch_norm: bool = True,
        activation: bool = True,
    ) -> str:
        h, w, cin = self._feature_shape(src)
        kh, kw = kernel
        fan_in = kh * kw * cin
        values = self._rng.normal(0.0, math.sqrt(2.0 / fan_in), (kh, kw, cin, out_channels))
        node_id = self._append(
            Node(
                self._next_id("conv"),
                "conv2d",
                inputs=(src,),
                attrs={"stride": tuple(stride), "padding": padding},
                weights={"kernel": Tensor(as_f32(values))},
            ),
            (
                axis_geometry(h, kh, stride[0], padding)[0],
                axis_geometry(w, kw, stride[1], padding)[0],
                out_channels,
            ),
        )
        if batch_norm:
            ones = Tensor.full((out_channels,), 1.0)
            zeros = Tensor.zeros((out_channels,))
            node_id = self._append(
                Node(
                    self._next_id("bn"),
                    "batch_norm",
                    inputs=(node_id,),
                    attrs={"epsilon": BATCH_NORM_EPSILON},
                    weights={"mean": zeros, "variance": ones, "gamma": ones, "beta": zeros},
                ),
                self._shapes[node_id],
            )
        if activation:
            node_id = self._append(
                Node(self._next_id("relu"), "relu", inputs=(node_id,)),
                self._shapes[node_id],
            )
        return node_id

    def add_pool(
        self,
        src: str,
        mode: str = "max",
        window: tuple[int, int] = (3, 3),
        stride: tuple[int, int] = (2, 2),
        padding: str = "same",
    ) -> str:
        h, w, c = self._feature_shape(src)
        return self._append(
            Node(
                self._next_id("pool"),
                "pool",
                inputs=(src,),
                attrs={
                    "mode": mode,
                    "window": tuple(window),
                    "stride": tuple(stride),
                    "padding": padding,
                },
            ),
            (
                axis_geometry(h, window[0], stride[0], padding)[0],
                axis_geometry(w, window[1], stride[1], padding)[0],
                c,
            ),
        )

    def add_global_avg_pool(self, src: str) -> str:
        _, _, c = self._feature_shape(src)
        return self._append(
            Node(self._next_id("gap"), "global_avg_pool", inputs=(src,)), (c,)
        )

    def add_fully_connected(self, src: str, out_features: int) -> str:
        shape = self._shapes[src]
        if len(shape) != 1:
            raise GraphError(f"fully_connected source {src!r} must produce a vector")
        d = shape[0]
        w = self._rng.normal(0.0, math.sqrt(2.0 / d), (d, out_features))
        return self._append(
            Node(
                self._next_id("fc"),
                "fully_connected",
                inputs=(src,),
                weights={"W": Tensor(as_f32(w)), "b": Tensor.zeros((out_features,))},
            ),
            (out_features,),
        )

    def add_softmax(self, src: str) -> str:
        return self._append(
            Node(self._next_id("softmax"), "softmax", inputs=(src,)),
            self._shapes[src],
        )

    def add_constant(self, value: Tensor) -> str:
        return self._append(
            Node(self._next_id("const"), "constant", weights={"value": value}),
            value.shape,
        )

    def _branch_out_shape(
        self, in_shape: tuple[int, int, int], steps: Sequence[BranchStep]
    ) -> tuple[int, int, int]:
        h, w, c = in_shape
        if not steps:
            raise GraphError("inception branch cannot be empty")
        for step in steps:
            if isinstance(step, ConvStep):
                h = axis_geometry(h, step.kernel[0], step.stride[0], step.padding)[0]
                w = axis_geometry(w, step.kernel[1], step.stride[1], step.padding)[0]
                c = step.out_channels
            elif isinstance(step, PoolStep):
                h = axis_geometry(h, step.window[0], step.stride[0], step.padding)[0]
                w = axis_geometry(w, step.window[1], step.stride[1], step.padding)[0]
            else:
                raise GraphError(f"unknown branch step {step!r}")
        return h, w, c

    def inception_module(
        self, src: str, branches: Sequence[Sequence[BranchStep]]
    ) -> str:
        """Parallel conv/pool branches concatenated on the channel axis."""
        if not 2 <= len(branches) <= 4:
            raise GraphError(
                f"inception module needs 2 to 4 branches, got {len(branches)}"
            )
        in_shape = self._feature_shape(src)
        out_shapes = [self._branch_out_shape(in_shape, b) for b in branches]
        spatial = {(h, w) for h, w, _ in out_shapes}
        if len(spatial) != 1:
            raise GraphError(
                f"inception branches disagree on spatial output: "
                f"{[(h, w) for h, w, _ in out_shapes]}"
            )
        tips = []
        for steps in branches:
            tip = src
            for step in steps:
                if isinstance(step, ConvStep):
                    tip = self.add_conv(
                        tip,
                        step.out_channels,
                        kernel=step.kernel,
                        stride=step.stride,
                        padding=step.padding,
                    )
                else:
                    tip = self.add_pool(
                        tip,
                        mode=step.mode,
                        window=step.window,
                        stride=step.stride,
                        padding=step.padding,
                    )
            tips.append(tip)
        h, w, _ = out_shapes[0]
        channels = sum(c for _, _, c in out_shapes)
        return self._append(
            Node(self._next_id("concat"), "concat", inputs=tuple(tips)),
            (h, w, channels),
        )

    def build(
        self, bottleneck_id: str, output_id: str, metadata: Mapping[str, str]
    ) -> CompGraph:
        if self._input_id is None:
            raise GraphError("graph has no input node")
        return CompGraph(self._nodes, self._input_id, bottleneck_id, output_id, metadata)


# MiniInception topology: 64x64x3 -> conv 3x3/s2 (16) -> conv 3x3/s1 (32)
# -> maxpool 3x3/s2 -> inception (64 ch) -> inception (96 ch)
# -> global average pool -> fully connected -> softmax.
MINI_INPUT_SIZE = 64
MINI_BOTTLENECK_WIDTH = 96

INCEPTION_A = (
    (ConvStep(16),),
    (ConvStep(16), ConvStep(24, kernel=(3, 3))),
    (ConvStep(8), ConvStep(16, kernel=(3, 3))),
    (PoolStep(), ConvStep(8)),
)

INCEPTION_B = (
    (ConvStep(24),),
    (ConvStep(24), ConvStep(32, kernel=(3, 3))),
    (ConvStep(12), ConvStep(16, kernel=(3, 3)), ConvStep(24, kernel=(3, 3))),
    (PoolStep(), ConvStep(16)),
)


def build_mini_inception(num_classes: int, seed: int = 0) -> CompGraph:
    """Desk-scale inception-family classifier with He-initialized weights."""
    if num_classes < 2:
        raise GraphError(f"num_classes must be at least 2, got {num_classes}")
    b = GraphBuilder(seed)
    x = b.add_input(MINI_INPUT_SIZE, MINI_INPUT_SIZE, 3)
    x = b.add_conv(x, 16, kernel=(3, 3), stride=(2, 2))
    x = b.add_conv(x, 32, kernel=(3, 3), stride=(1, 1))
    x = b.add_pool(x, mode="max", window=(3, 3), stride=(2, 2))
    x = b.inception_module(x, INCEPTION_A)
    x = b.inception_module(x, INCEPTION_B)
    neck = b.add_global_avg_pool(x)
    logits = b.add_fully_connected(neck, num_classes)
    out = b.add_softmax(logits)
    return b.build(
        bottleneck_id=neck,
        output_id=out,
        metadata={
            "name": "mini-inception",
            "version": "1",
            "classes": str(num_classes),
            "input_size": str(MINI_INPUT_SIZE),
        },
    )


def with_head(graph: CompGraph, weight: Tensor, bias: Tensor) -> CompGraph:
    """Return a copy of the graph with new final-layer parameters installed."""
    fc_id = graph.node(graph.output_id).inputs[0]
    fc = graph.node(fc_id)
    if fc.op != "fully_connected":
        raise GraphError("output softmax is not fed by a fully connected node")
    expected = fc.weights["W"].shape
    if weight.shape[0] != expected[0]:
        raise GraphError(
            f"head width {weight.shape[0]} does not match bottleneck width {expected[0]}"
        )
    if bias.shape != (weight.shape[1],):
        raise GraphError(f"head bias shape {bias.shape} does not match W {weight.shape}")
    new_fc = replace(
        fc,
        weights={"W": Tensor(as_f32(weight.data)), "b": Tensor(as_f32(bias.data))},
        quant={},
    )
    nodes = [new_fc if n.id == fc_id else n for n in graph.nodes]
    metadata = dict(graph.metadata)
    metadata["classes"] = str(weight.shape[1])
    return CompGraph(nodes, graph.input_id, graph.bottleneck_id, graph.output_id, metadata)
