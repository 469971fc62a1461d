"""Transfer-learning pipeline: frozen features, retrained softmax head.

The flow mirrors the app's retraining procedure: scan a
``data/<class>/`` tree, push every image through a frozen feature
extractor once (cached on disk), train only the final softmax layer on
the cached bottleneck vectors, then export a model bundle plus label
file that reproduce the in-memory predictions exactly.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import ops
from .bundle import LabelList, emit_labels, graph_fingerprint, save_bundle
from .dataset import DatasetIndex, decode_rgb, index_dataset
from .errors import TrainError
from .graph import CompGraph, build_mini_inception, bottleneck, forward, infer_shapes, with_head
from .tensor import Tensor, as_f32

log = logging.getLogger("canopy.retrain")

AUGMENTATIONS = ("none", "flip", "flip+brightness")
_EVAL_CHUNK = 32


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    validation_fraction: float = 0.10
    test_fraction: float = 0.10
    augmentation: str = "none"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise TrainError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise TrainError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be positive, got {self.batch_size}")
        for name in ("validation_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise TrainError(f"{name} must be in [0, 0.5), got {value}")
        if self.validation_fraction + self.test_fraction >= 1.0:
            raise TrainError("validation_fraction + test_fraction must be < 1")
        if self.augmentation not in AUGMENTATIONS:
            raise TrainError(
                f"unknown augmentation {self.augmentation!r}; expected one of {AUGMENTATIONS}"
            )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    validation_accuracy: Optional[float]


@dataclass(frozen=True)
class TrainedHead:
    W: Tensor
    b: Tensor
    history: tuple

    @property
    def num_classes(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class SplitFeatures:
    """Bottleneck rows for one split, aligned with labels and paths."""

    features: np.ndarray
    labels: np.ndarray
    paths: tuple

    def __len__(self) -> int:
        return self.features.shape[0]


def _variant_tags(augmentation: str) -> tuple:
    if augmentation == "none":
        return ("",)
    if augmentation == "flip":
        return ("", "flip")
    return ("", "flip", "bright")


def _brightness_factor(raw: bytes) -> float:
    # Seeded by image content, so the same photo always gets the same
    # exposure shift no matter where it sits in the scan.
    digest = hashlib.sha256(raw + b":brightness").digest()
    unit = (int.from_bytes(digest[:8], "big") % 10000) / 9999.0
    return 0.7 + 0.6 * unit


def _apply_variant(decoded: Tensor, tag: str, raw: bytes) -> Tensor:
    if tag == "":
        return decoded
    if tag == "flip":
        return Tensor(decoded.data[:, :, ::-1, :])
    factor = _brightness_factor(raw)
    return Tensor._wrap(np.clip(decoded.data * factor, 0.0, 255.0))


def compute_bottlenecks(
    graph: CompGraph,
    index: DatasetIndex,
    cache_dir: Optional[Union[str, Path]] = None,
    augmentation: str = "none",
    workers: int = 1,
) -> dict:
    """Bottleneck features per split, with a content-addressed disk cache.

    Cache files are named by sha256 over (image bytes, graph
    fingerprint, variant tag), so edited images, a different extractor,
    or a different augmentation variant can never collide.  A cached
    row of the wrong width is recomputed, not trusted.  Undecodable
    files are skipped with a warning.  Train rows may fan out over
    threads; results are merged in index order.
    """
    if augmentation not in AUGMENTATIONS:
        raise TrainError(
            f"unknown augmentation {augmentation!r}; expected one of {AUGMENTATIONS}"
        )
    fingerprint = graph_fingerprint(graph).encode("ascii")
    width = infer_shapes(graph)[graph.bottleneck_id][-1]
    target = graph.input_shape[0]
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir)
        cache_path.mkdir(parents=True, exist_ok=True)

    def rows_for(entry) -> Optional[list]:
        try:
            raw = entry.path.read_bytes()
        except OSError as exc:
            log.warning("skipping unreadable image %s: %s", entry.path, exc)
            return None
        tags = _variant_tags(augmentation) if entry.split == "train" else ("",)
        decoded = None
        rows = []
        for tag in tags:
            key = hashlib.sha256(raw + fingerprint + b":" + tag.encode("ascii")).hexdigest()
            if cache_path is not None:
                hit = cache_path / key
                if hit.is_file():
                    blob = hit.read_bytes()
                    if len(blob) == 8 * width:
                        rows.append(np.frombuffer(blob, dtype="<f8"))
                        continue
                    log.warning("cache entry %s has wrong size; recomputing", hit.name)
            if decoded is None:
                try:
                    decoded = decode_rgb(raw)
                except Exception as exc:
                    log.warning("skipping undecodable image %s: %s", entry.path, exc)
                    return None
            image = _apply_variant(decoded, tag, raw)
            image = ops.resize_bilinear(image, target, target)
            image = ops.normalize_pixels(image, mode="symmetric")
            vector = bottleneck(graph, image).data[0]
            if cache_path is not None:
                (cache_path / key).write_bytes(vector.astype("<f8").tobytes())
            rows.append(vector)
        return rows

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_entry = list(pool.map(rows_for, index.entries))
    else:
        per_entry = [rows_for(e) for e in index.entries]

    collected = {split: ([], [], []) for split in ("train", "validation", "test")}
    for entry, rows in zip(index.entries, per_entry):
        if rows is None:
            continue
        feats, labels, paths = collected[entry.split]
        for row in rows:
            feats.append(row)
            labels.append(entry.class_index)
            paths.append(entry.path)
    out = {}
    for split, (feats, labels, paths) in collected.items():
        matrix = np.array(feats, dtype=np.float64) if feats else np.zeros((0, width))
        out[split] = SplitFeatures(
            features=matrix.reshape(len(feats), width),
            labels=np.array(labels, dtype=np.int64),
            paths=tuple(paths),
        )
    return out


def _as_matrix(features) -> np.ndarray:
    data = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if data.ndim != 2:
        raise TrainError(f"features must be 2-D [n, d], got shape {tuple(data.shape)}")
    return data


def _as_labels(labels, count: int) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim != 1 or arr.shape[0] != count:
        raise TrainError(f"labels must be 1-D with {count} entries, got shape {tuple(arr.shape)}")
    return arr


def _head_metrics(feats: np.ndarray, labels: np.ndarray, W: np.ndarray, b: np.ndarray):
    probs = ops.softmax(Tensor._wrap(feats @ W + b)).data
    loss = float(np.mean(-np.log(np.maximum(probs[np.arange(len(labels)), labels], 1e-12))))
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, accuracy


def train_head(
    features,
    labels,
    config: TrainConfig,
    num_classes: Optional[int] = None,
    validation: Optional[tuple] = None,
) -> TrainedHead:
    """Mini-batch SGD on softmax cross-entropy over frozen features.

    W and b start at zero; batches are drawn in seeded shuffled order,
    so the result is a pure function of (features, labels, config).
    The returned weights are rounded to float32-representable values,
    matching what a saved bundle reloads.
    """
    feats = _as_matrix(features)
    n, d = feats.shape
    if n == 0:
        raise TrainError("training split is empty")
    labels_arr = _as_labels(labels, n)
    k = int(num_classes) if num_classes is not None else int(labels_arr.max()) + 1
    present = set(labels_arr.tolist())
    missing = [i for i in range(k) if i not in present]
    if missing:
        raise TrainError(f"class indices {missing} have no examples in the train split")
    val = None
    if validation is not None:
        val_feats = _as_matrix(validation[0])
        val_labels = _as_labels(validation[1], val_feats.shape[0])
        if val_feats.shape[0]:
            val = (val_feats, val_labels)

    W = np.zeros((d, k), dtype=np.float64)
    b = np.zeros(k, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            pick = order[start:start + config.batch_size]
            dW, db, _ = ops.head_gradients(
                Tensor._wrap(feats[pick]),
                Tensor._wrap(W),
                Tensor._wrap(b),
                labels_arr[pick],
            )
            W = W - config.learning_rate * dW.data
            b = b - config.learning_rate * db.data
        loss, accuracy = _head_metrics(feats, labels_arr, W, b)
        val_accuracy = None
        if val is not None:
            _, val_accuracy = _head_metrics(val[0], val[1], W, b)
        history.append(EpochStats(epoch, loss, accuracy, val_accuracy))
    return TrainedHead(
        W=Tensor._wrap(as_f32(W)),
        b=Tensor._wrap(as_f32(b)),
        history=tuple(history),
    )


def _model_probabilities(model, inputs) -> np.ndarray:
    if isinstance(model, TrainedHead):
        feats = _as_matrix(inputs)
        if feats.shape[1] != model.W.shape[0]:
            raise TrainError(
                f"feature width {feats.shape[1]} does not match head input {model.W.shape[0]}"
            )
        return ops.softmax(Tensor._wrap(feats @ model.W.data + model.b.data)).data
    if isinstance(model, CompGraph):
        data = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs, dtype=np.float64)
        if data.ndim != 4:
            raise TrainError(f"graph evaluation needs [n, h, w, c] input, got {data.shape}")
        chunks = [
            forward(model, Tensor(data[i:i + _EVAL_CHUNK])).data
            for i in range(0, data.shape[0], _EVAL_CHUNK)
        ]
        return np.concatenate(chunks, axis=0)
    raise TrainError(f"cannot evaluate model of type {type(model).__name__}")


def evaluate(model, inputs, labels) -> tuple:
    """Accuracy and confusion matrix (rows true, columns predicted)."""
    first = inputs.shape[0] if isinstance(inputs, Tensor) else np.asarray(inputs).shape[0]
    if first == 0:
        raise TrainError("cannot evaluate an empty split")
    probs = _model_probabilities(model, inputs)
    n, k = probs.shape
    labels_arr = _as_labels(labels, n)
    if labels_arr.min() < 0 or labels_arr.max() >= k:
        raise TrainError(f"labels must be in [0, {k}), got range "
                         f"[{labels_arr.min()}, {labels_arr.max()}]")
    predictions = np.argmax(probs, axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels_arr, predictions), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return accuracy, confusion


def export_retrained(graph: CompGraph, head: TrainedHead, labels, out_dir) -> tuple:
    """Write model.trmb and labels.txt; the pair reloads bit-exactly."""
    label_list = LabelList(labels)
    if len(label_list) != head.num_classes:
        raise TrainError(
            f"{len(label_list)} labels for a {head.num_classes}-class head"
        )
    finished = with_head(graph, head.W, head.b)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = save_bundle(finished, label_list, out / "model.trmb")
    labels_path = emit_labels(label_list, out / "labels.txt")
    return model_path, labels_path


@dataclass(frozen=True)
class PipelineResult:
    index: DatasetIndex
    graph: CompGraph
    head: TrainedHead
    report: dict
    model_path: Path
    labels_path: Path
    report_path: Path

    @property
    def train_accuracy(self) -> float:
        return self.report["final"]["train_accuracy"]

    @property
    def validation_accuracy(self) -> Optional[float]:
        return self.report["final"]["validation_accuracy"]


def run_pipeline(
    data_dir,
    out_dir,
    config: Optional[TrainConfig] = None,
    extractor: Optional[CompGraph] = None,
    cache_dir=None,
    workers: int = 1,
) -> PipelineResult:
    """Index, featurize, train, evaluate, export, and report.

    Deterministic end to end: the same dataset bytes and config produce
    byte-identical model.trmb, labels.txt, and report files, warm or
    cold cache.
    """
    started = time.monotonic()
    config = config or TrainConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = index_dataset(data_dir, config.validation_fraction, config.test_fraction)
    classes = index.classes
    graph = extractor if extractor is not None else build_mini_inception(len(classes), seed=config.seed)
    if cache_dir is None:
        cache_dir = out / "bottleneck_cache"
    splits = compute_bottlenecks(
        graph, index, cache_dir, augmentation=config.augmentation, workers=workers
    )
    train = splits["train"]
    if len(train) == 0:
        raise TrainError("no images landed in the train split; lower the holdout fractions")
    for class_index in range(len(classes)):
        if class_index not in set(train.labels.tolist()):
            raise TrainError(
                f"class {classes[class_index]!r} has no images in the train split"
            )
    validation = splits["validation"]
    head = train_head(
        train.features,
        train.labels,
        config,
        num_classes=len(classes),
        validation=(validation.features, validation.labels) if len(validation) else None,
    )

    final: dict = {}
    confusions: dict = {}
    for split_name in ("train", "validation", "test"):
        split = splits[split_name]
        if len(split) == 0:
            final[f"{split_name}_accuracy"] = None
            continue
        accuracy, confusion = evaluate(head, split.features, split.labels)
        final[f"{split_name}_accuracy"] = accuracy
        confusions[split_name] = confusion.tolist()

    model_path, labels_path = export_retrained(graph, head, classes, out)
    report = {
        "classes": list(classes),
        "image_counts": {s: len(splits[s]) for s in ("train", "validation", "test")},
        "config": asdict(config),
        "model": {
            "name": graph.metadata.get("name", ""),
            "parameters": graph.param_count(),
            "fingerprint": graph_fingerprint(graph),
        },
        "history": [
            {
                "epoch": e.epoch,
                "train_loss": e.train_loss,
                "train_accuracy": e.train_accuracy,
                "validation_accuracy": e.validation_accuracy,
            }
            for e in head.history
        ],
        "final": final,
        "confusion": confusions,
        "elapsed_seconds": round(time.monotonic() - started, 3),
    }
    report_path = out / "training_report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return PipelineResult(
        index=index,
        graph=graph,
        head=head,
        report=report,
        model_path=model_path,
        labels_path=labels_path,
        report_path=report_path,
    )
