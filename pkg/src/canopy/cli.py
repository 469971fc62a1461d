"""Command-line front door: retrain, optimize, classify, inspect, serve."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bundle import load_bundle
from .catalog import SpeciesCatalog
from .errors import CanopyError
from .graph import infer_shapes
from .optimize import DEFAULT_PASSES, PASSES, optimize
from .retrain import AUGMENTATIONS, TrainConfig, run_pipeline
from .service import DEFAULT_TOP_K, ServeConfig, classify, serve


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canopy",
        description="Tree species recognition toolkit: retrain, compress, and serve models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrain", help="train a classification head on a folder-per-class dataset")
    p.add_argument("--data", required=True, help="dataset root: one folder per class")
    p.add_argument("--out", required=True, help="output directory for model, labels, and report")
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--seed", type=int, default=TrainConfig.seed)
    p.add_argument("--validation-fraction", type=float, default=TrainConfig.validation_fraction)
    p.add_argument("--test-fraction", type=float, default=TrainConfig.test_fraction)
    p.add_argument("--augmentation", choices=AUGMENTATIONS, default=TrainConfig.augmentation)
    p.add_argument("--extractor", help="existing bundle to reuse as the frozen feature extractor")
    p.add_argument("--cache-dir", help="bottleneck cache directory (default: OUT/bottleneck_cache)")
    p.add_argument("--workers", type=int, default=1, help="threads for feature extraction")

    p = sub.add_parser("optimize", help="shrink a bundle with folding and int8 quantization")
    p.add_argument("--in", dest="in_path", required=True, help="input bundle")
    p.add_argument("--out", required=True, help="output bundle")
    p.add_argument(
        "--passes",
        default=",".join(DEFAULT_PASSES),
        help=f"comma-separated pass list (available: {', '.join(PASSES)})",
    )

    p = sub.add_parser("classify", help="classify one image file")
    p.add_argument("--model", required=True, help="model bundle")
    p.add_argument("--image", required=True, help="image file (JPEG or PNG)")
    p.add_argument("--top", type=int, default=DEFAULT_TOP_K, help="number of classes to print")
    p.add_argument("--catalog", help="species catalog JSON (default: bundled placeholder)")

    p = sub.add_parser("inspect", help="print a bundle's topology and storage layout")
    p.add_argument("--model", required=True, help="model bundle")

    p = sub.add_parser("serve", help="run the HTTP recognition service")
    p.add_argument("--model", help="model bundle (or CANOPY_MODEL)")
    p.add_argument("--catalog", help="species catalog JSON (or CANOPY_CATALOG)")
    p.add_argument("--listen", help="host:port to bind (or CANOPY_LISTEN; default 127.0.0.1:8000)")
    p.add_argument("--max-upload-bytes", type=int, help="upload cap (or CANOPY_MAX_UPLOAD_BYTES)")
    p.add_argument("--cors-origin", help="allowed origin (or CANOPY_CORS_ORIGIN; default *)")
    p.add_argument("--ui", help="static UI directory to serve at / (or CANOPY_UI)")
    return parser


def _cmd_retrain(args) -> int:
    config = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
        test_fraction=args.test_fraction,
        augmentation=args.augmentation,
    )
    extractor = None
    if args.extractor:
        extractor, _ = load_bundle(args.extractor)
    result = run_pipeline(
        args.data,
        args.out,
        config,
        extractor=extractor,
        cache_dir=args.cache_dir,
        workers=args.workers,
    )
    counts = result.report["image_counts"]
    print(f"indexed {sum(counts.values())} images "
          f"(train {counts['train']}, validation {counts['validation']}, test {counts['test']})")
    for split in ("train", "validation", "test"):
        accuracy = result.report["final"][f"{split}_accuracy"]
        shown = f"{accuracy:.1%}" if accuracy is not None else "n/a (empty split)"
        print(f"{split} accuracy: {shown}")
    print(f"model:  {result.model_path}")
    print(f"labels: {result.labels_path}")
    print(f"report: {result.report_path}")
    return 0


def _cmd_optimize(args) -> int:
    graph, labels = load_bundle(args.in_path)
    names = [n.strip() for n in args.passes.split(",") if n.strip()]
    optimized, reports = optimize(graph, names, labels=labels)
    header = f"{'pass':<22} {'nodes':>12} {'bytes':>20} {'max deviation':>14}"
    print(header)
    for r in reports:
        nodes = f"{r.nodes_before} -> {r.nodes_after}"
        size = f"{r.bytes_before} -> {r.bytes_after}"
        print(f"{r.name:<22} {nodes:>12} {size:>20} {r.max_deviation:>14.3e}")
    from .bundle import save_bundle

    save_bundle(optimized, labels, args.out)
    if reports:
        ratio = reports[-1].bytes_after / reports[0].bytes_before
        print(f"wrote {args.out} ({ratio:.1%} of original size)")
    else:
        print(f"wrote {args.out} (no passes applied)")
    return 0


def _cmd_classify(args) -> int:
    graph, labels = load_bundle(args.model)
    catalog = SpeciesCatalog.load(args.catalog) if args.catalog else SpeciesCatalog.bundled()
    image_bytes = Path(args.image).read_bytes()
    prediction = classify(graph, labels, catalog, image_bytes, k=args.top)
    print(f"top-{len(prediction.entries)} predictions for {args.image}:")
    for rank, entry in enumerate(prediction.entries, start=1):
        print(f"  {rank}. {entry.label:<16} {entry.probability:7.2%}  {entry.description}")
    return 0


def _cmd_inspect(args) -> int:
    graph, labels = load_bundle(args.model)
    size = Path(args.model).stat().st_size
    shapes = infer_shapes(graph)
    quantized = sum(1 for node in graph.nodes for name in node.weights if name in node.quant)
    floats = sum(1 for node in graph.nodes for name in node.weights if name not in node.quant)
    meta = graph.metadata
    print(f"name: {meta.get('name', '?')}   version: {meta.get('version', '?')}")
    print(f"classes: {len(labels)}   input: "
          + "x".join(str(d) for d in graph.input_shape))
    print(f"nodes: {len(graph.nodes)}   parameters: {graph.param_count()}")
    print(f"serialized size: {size} bytes")
    print(f"weight tensors: {quantized} int8, {floats} float32")
    print()
    print(f"{'id':<14} {'op':<18} {'output shape':<18} {'params':>8}  storage")
    for node in graph.nodes:
        shape = "x".join(str(d) for d in shapes[node.id][1:]) or "-"
        kinds = sorted(
            ("int8" if name in node.quant else "f32") for name in node.weights
        )
        storage = ",".join(kinds) if kinds else "-"
        print(f"{node.id:<14} {node.op:<18} {shape:<18} {node.param_count():>8}  {storage}")
    return 0


def _cmd_serve(args) -> int:
    config = ServeConfig.resolve(
        model_path=args.model,
        catalog_path=args.catalog,
        listen=args.listen,
        max_upload_bytes=args.max_upload_bytes,
        cors_origin=args.cors_origin,
        ui_dir=args.ui,
    )
    serve(config)
    return 0


_COMMANDS = {
    "retrain": _cmd_retrain,
    "optimize": _cmd_optimize,
    "classify": _cmd_classify,
    "inspect": _cmd_inspect,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CanopyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
