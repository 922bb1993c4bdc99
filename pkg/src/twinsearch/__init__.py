"""Patch retrieval by learned embedding distance.

Twin forward passes through one convolutional network map image patches to
low-dimensional vectors; retrieval is exact nearest-neighbour search over a
persisted store of those vectors.
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
    ProtocolError,
    TwinsearchError,
)
from .data import (
    DatasetManifest,
    PatchRecord,
    load_dataset,
    load_patch_dir,
    split_dataset,
    synth_generate,
    write_dataset,
)
from .evaluation import (
    EvalRun,
    MetricsReport,
    UncertainReport,
    majority_vote_label,
    metrics_at_k,
    run_retrieval_eval,
    top_k_accuracy,
    uncertain_query_report,
)
from .network import (
    Network,
    NetworkConfig,
    build_network,
    load_checkpoint,
    preset_config,
    preset_names,
    save_checkpoint,
)
from .saliency import SaliencyMap, grad_cam, overlay
from .store import (
    EmbeddingRecord,
    FeatureStore,
    Neighbor,
    RetrievalResult,
    index_build,
    query_top_k,
)
from .training import TrainConfig, TrainReport, contrastive_loss, sample_pairs, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetManifest",
    "DimensionError",
    "EmbeddingRecord",
    "EvalRun",
    "FeatureStore",
    "MetricsReport",
    "Neighbor",
    "Network",
    "NetworkConfig",
    "NumericError",
    "PatchRecord",
    "ProtocolError",
    "RetrievalResult",
    "SaliencyMap",
    "TrainConfig",
    "TrainReport",
    "TwinsearchError",
    "UncertainReport",
    "build_network",
    "contrastive_loss",
    "grad_cam",
    "index_build",
    "load_checkpoint",
    "load_dataset",
    "load_patch_dir",
    "majority_vote_label",
    "metrics_at_k",
    "overlay",
    "preset_config",
    "preset_names",
    "query_top_k",
    "run_retrieval_eval",
    "sample_pairs",
    "save_checkpoint",
    "split_dataset",
    "synth_generate",
    "top_k_accuracy",
    "train",
    "uncertain_query_report",
    "write_dataset",
]
