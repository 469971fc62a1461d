"""Model bundle serialization and label files.

A bundle is a single binary container: the ASCII magic ``TRMB``, a
format version, a human-readable JSON manifest (topology, attributes,
weight-blob offsets, quantization descriptors, metadata, labels), then
the concatenated weight blobs.  Float weights are stored as little-
endian float32; quantized weights as raw int8 with their scale and zero
point in the manifest.  Graphs produced by the builders and passes hold
float32-representable values, so save/load round-trips reproduce
forward outputs bit-exactly.

The label file is the plain-text companion: UTF-8, one label per line,
LF terminated, line number = class index.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import BundleError
from .graph import CompGraph, Node
from .quantization import QuantDescriptor, QuantizedTensor, dequantize
from .tensor import Tensor

MAGIC = b"TRMB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")  # magic, version, manifest length

# Attribute values that round-trip through JSON as lists but are tuples
# in memory.
_TUPLE_ATTRS = ("stride", "window", "shape")

PathLike = Union[str, Path]


class LabelList(Sequence[str]):
    """Ordered class names; position = class index.

    Entries are unique, non-blank, and sorted ascending by UTF-8 byte
    value, matching the order a dataset scan produces.
    """

    def __init__(self, labels: Iterable[str]) -> None:
        items = tuple(str(x) for x in labels)
        if not items:
            raise BundleError("label list is empty")
        for label in items:
            if not label.strip():
                raise BundleError("label list contains a blank entry")
        if len(set(items)) != len(items):
            raise BundleError("label list contains duplicate entries")
        if list(items) != sorted(items, key=lambda s: s.encode("utf-8")):
            raise BundleError("labels must be sorted ascending by byte value")
        self._items = items

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other):
        if isinstance(other, LabelList):
            return self._items == other._items
        if isinstance(other, (list, tuple)):
            return self._items == tuple(other)
        return NotImplemented

    def __hash__(self):
        return hash(self._items)

    def __repr__(self) -> str:
        return f"LabelList({list(self._items)!r})"

    def index_of(self, label: str) -> int:
        return self._items.index(label)


def _encode(graph: CompGraph, labels: Sequence[str]) -> bytes:
    blob = bytearray()
    nodes_json = []
    for node in graph.nodes:
        entry: dict = {"id": node.id, "op": node.op, "inputs": list(node.inputs)}
        if node.attrs:
            entry["attrs"] = {k: list(v) if isinstance(v, tuple) else v
                              for k, v in node.attrs.items()}
        if node.weights:
            weights_json = {}
            for name in sorted(node.weights):
                tensor = node.weights[name]
                offset = len(blob)
                if name in node.quant:
                    qt = node.quant[name]
                    raw = qt.data.tobytes()
                    weights_json[name] = {
                        "dtype": "i8",
                        "shape": list(qt.desc.shape),
                        "offset": offset,
                        "bytes": len(raw),
                        "scale": qt.desc.scale,
                        "zero_point": qt.desc.zero_point,
                    }
                else:
                    raw = tensor.data.astype("<f4").tobytes()
                    weights_json[name] = {
                        "dtype": "f32",
                        "shape": list(tensor.shape),
                        "offset": offset,
                        "bytes": len(raw),
                    }
                blob.extend(raw)
            entry["weights"] = weights_json
        nodes_json.append(entry)
    manifest = {
        "metadata": dict(graph.metadata),
        "input_id": graph.input_id,
        "bottleneck_id": graph.bottleneck_id,
        "output_id": graph.output_id,
        "nodes": nodes_json,
        "labels": list(labels),
        "weights_bytes": len(blob),
    }
    manifest_bytes = json.dumps(manifest, indent=1).encode("utf-8")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest_bytes)) + manifest_bytes + bytes(blob)


def bundle_bytes(graph: CompGraph, labels) -> bytes:
    """Serialize a graph plus labels to the in-memory bundle encoding."""
    return _encode(graph, list(LabelList(labels)))


def save_bundle(graph: CompGraph, labels, path: PathLike) -> Path:
    path = Path(path)
    path.write_bytes(bundle_bytes(graph, labels))
    return path


def graph_fingerprint(graph: CompGraph) -> str:
    """Stable hex digest over topology, attributes, and weight bytes."""
    return hashlib.sha256(_encode(graph, [])).hexdigest()


def _decode_weight(name: str, node_id: str, spec: dict, blob: bytes):
    shape = tuple(int(d) for d in spec["shape"])
    offset = int(spec["offset"])
    nbytes = int(spec["bytes"])
    if offset < 0 or offset + nbytes > len(blob):
        raise BundleError(
            f"truncated weight blob: {node_id}.{name} wants bytes "
            f"[{offset}, {offset + nbytes}) of {len(blob)}"
        )
    count = int(np.prod(shape))
    dtype = spec["dtype"]
    if dtype == "f32":
        if nbytes != 4 * count:
            raise BundleError(
                f"manifest/weight mismatch: {node_id}.{name} shape {shape} "
                f"needs {4 * count} bytes, manifest says {nbytes}"
            )
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        return Tensor(values.astype(np.float64).reshape(shape)), None
    if dtype == "i8":
        if nbytes != count:
            raise BundleError(
                f"manifest/weight mismatch: {node_id}.{name} shape {shape} "
                f"needs {count} bytes, manifest says {nbytes}"
            )
        q = np.frombuffer(blob, dtype=np.int8, count=count, offset=offset).reshape(shape)
        desc = QuantDescriptor(
            scale=float(spec["scale"]),
            zero_point=int(spec["zero_point"]),
            shape=shape,
        )
        qt = QuantizedTensor(data=np.ascontiguousarray(q), desc=desc)
        return Tensor._wrap(dequantize(qt)), qt
    raise BundleError(f"unknown weight dtype {dtype!r} at {node_id}.{name}")


def decode_bundle(data: bytes) -> tuple[CompGraph, LabelList]:
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise BundleError("bad magic: not a TRMB model bundle")
    _, version, manifest_len = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format version {version}")
    if _HEADER.size + manifest_len > len(data):
        raise BundleError("truncated manifest: file shorter than declared")
    try:
        manifest = json.loads(data[_HEADER.size:_HEADER.size + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"corrupt manifest: {exc}") from exc
    blob = data[_HEADER.size + manifest_len:]
    declared = int(manifest["weights_bytes"])
    if declared != len(blob):
        raise BundleError(
            f"manifest/weight mismatch: manifest declares {declared} weight "
            f"bytes, container holds {len(blob)}"
        )
    nodes = []
    for entry in manifest["nodes"]:
        attrs = {
            k: tuple(v) if k in _TUPLE_ATTRS else v
            for k, v in entry.get("attrs", {}).items()
        }
        weights = {}
        quant = {}
        for name, spec in entry.get("weights", {}).items():
            tensor, qt = _decode_weight(name, entry["id"], spec, blob)
            weights[name] = tensor
            if qt is not None:
                quant[name] = qt
        nodes.append(
            Node(
                id=entry["id"],
                op=entry["op"],
                inputs=tuple(entry.get("inputs", ())),
                attrs=attrs,
                weights=weights,
                quant=quant,
            )
        )
    graph = CompGraph(
        nodes,
        input_id=manifest["input_id"],
        bottleneck_id=manifest["bottleneck_id"],
        output_id=manifest["output_id"],
        metadata=manifest.get("metadata", {}),
    )
    return graph, LabelList(manifest["labels"])


def load_bundle(path: PathLike) -> tuple[CompGraph, LabelList]:
    return decode_bundle(Path(path).read_bytes())


def emit_labels(labels, path: PathLike) -> Path:
    """Write one label per line, UTF-8, LF, newline-terminated."""
    path = Path(path)
    text = "\n".join(LabelList(labels)) + "\n"
    path.write_bytes(text.encode("utf-8"))
    return path


def load_labels(path: PathLike) -> LabelList:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise BundleError(f"label file {path} is empty")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines):
        if not line.strip():
            raise BundleError(f"label file {path} has a blank line at {i + 1}")
    return LabelList(lines)
