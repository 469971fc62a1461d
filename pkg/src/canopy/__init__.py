"""Tree species recognition toolkit.

Small inception-style models evaluated on a pure-numpy runtime, with
graph compression, transfer-learning retrain, and an HTTP recognition
service for field-guide clients.
"""

from .bundle import (
    LabelList,
    bundle_bytes,
    decode_bundle,
    emit_labels,
    graph_fingerprint,
    load_bundle,
    load_labels,
    save_bundle,
)
from .catalog import SpeciesCatalog, SpeciesInfo
from .dataset import (
    DatasetIndex,
    ImageEntry,
    assign_split,
    decode_rgb,
    index_dataset,
    load_training_image,
    prepare_image,
)
from .errors import (
    BundleError,
    CanopyError,
    CatalogError,
    DatasetError,
    GraphError,
    OptimizeError,
    ServiceError,
    ShapeError,
    TrainError,
)
from .graph import (
    CompGraph,
    ConvStep,
    GraphBuilder,
    Node,
    PoolStep,
    bottleneck,
    build_mini_inception,
    forward,
    infer_shapes,
    with_head,
)
from .ops import (
    BatchNormParams,
    ConvSpec,
    batch_norm,
    concat_channels,
    conv2d,
    cross_entropy,
    fully_connected,
    global_avg_pool,
    head_gradients,
    normalize_pixels,
    pool,
    relu,
    resize_bilinear,
    softmax,
)
from .optimize import (
    DEFAULT_PASSES,
    PassReport,
    eliminate_dead_nodes,
    fold_batch_norm,
    fold_constants,
    optimize,
    probe_batch,
    quantize_weights,
)
from .quantization import QuantDescriptor, QuantizedTensor, dequantize, quantize_array
from .retrain import (
    PipelineResult,
    TrainConfig,
    TrainedHead,
    compute_bottlenecks,
    evaluate,
    export_retrained,
    run_pipeline,
    train_head,
)
from .service import Prediction, PredictionEntry, ServeConfig, classify, create_app, serve
from .tensor import Tensor, as_f32

__version__ = "0.1.0"

__all__ = [
    "BatchNormParams",
    "BundleError",
    "CanopyError",
    "CatalogError",
    "CompGraph",
    "ConvStep",
    "ConvSpec",
    "DatasetError",
    "DatasetIndex",
    "DEFAULT_PASSES",
    "GraphBuilder",
    "GraphError",
    "ImageEntry",
    "LabelList",
    "Node",
    "OptimizeError",
    "PassReport",
    "PipelineResult",
    "PoolStep",
    "Prediction",
    "PredictionEntry",
    "QuantDescriptor",
    "QuantizedTensor",
    "ServeConfig",
    "ServiceError",
    "ShapeError",
    "SpeciesCatalog",
    "SpeciesInfo",
    "Tensor",
    "TrainConfig",
    "TrainError",
    "TrainedHead",
    "as_f32",
    "assign_split",
    "batch_norm",
    "bottleneck",
    "build_mini_inception",
    "bundle_bytes",
    "classify",
    "compute_bottlenecks",
    "concat_channels",
    "conv2d",
    "create_app",
    "cross_entropy",
    "decode_bundle",
    "decode_rgb",
    "dequantize",
    "eliminate_dead_nodes",
    "emit_labels",
    "evaluate",
    "export_retrained",
    "fold_batch_norm",
    "fold_constants",
    "forward",
    "fully_connected",
    "global_avg_pool",
    "graph_fingerprint",
    "head_gradients",
    "index_dataset",
    "infer_shapes",
    "load_bundle",
    "load_labels",
    "load_training_image",
    "normalize_pixels",
    "optimize",
    "pool",
    "prepare_image",
    "probe_batch",
    "quantize_array",
    "quantize_weights",
    "relu",
    "resize_bilinear",
    "run_pipeline",
    "save_bundle",
    "serve",
    "softmax",
    "train_head",
    "with_head",
]
