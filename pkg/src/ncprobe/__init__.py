"""Neural collapse metrics, from-scratch MLP training and partial fine-tuning."""

__version__ = "0.1.0"

from .core import (
    ClassStatistics,
    DatasetSplit,
    FeatureMatrix,
    build_feature_matrix,
    load_csv,
    load_fmx,
    load_idx,
    load_split,
    save_csv,
    save_fmx,
    save_split,
)
from .linalg import SymEig, pinv_quadratic_trace, power_spectral_norm, sym_eig
from .metrics import (
    MetricBundle,
    cdnv,
    class_statistics,
    etf_deviation,
    layer_metrics,
    metric_bundle,
    nc1,
    numerical_rank,
    pearson,
)
from .network import (
    LossKind,
    Network,
    NetworkSpec,
    count_parameters,
    forward,
    init_network,
    load_net,
    loss_and_grads,
    save_net,
    strip_projection_head,
)
from .training import TrainConfig, TrainHistory, cosine_lr, desk_config, sgd_step, train
from .transfer import (
    FineTuneMethod,
    FineTunePlan,
    TransferResult,
    adaptive_avg_pool,
    evaluate,
    layerwise_probe,
    make_plan,
    run_transfer,
    scl_combine,
)
from .synth import SyntheticSpec, TransferPairSpec, make_classification_task, make_transfer_pair

__all__ = [
    "ClassStatistics",
    "DatasetSplit",
    "FeatureMatrix",
    "build_feature_matrix",
    "load_csv",
    "load_fmx",
    "load_idx",
    "load_split",
    "save_csv",
    "save_fmx",
    "save_split",
    "MetricBundle",
    "cdnv",
    "class_statistics",
    "etf_deviation",
    "layer_metrics",
    "metric_bundle",
    "nc1",
    "numerical_rank",
    "pearson",
    "LossKind",
    "Network",
    "NetworkSpec",
    "count_parameters",
    "forward",
    "init_network",
    "load_net",
    "loss_and_grads",
    "save_net",
    "strip_projection_head",
    "FineTuneMethod",
    "FineTunePlan",
    "TransferResult",
    "adaptive_avg_pool",
    "evaluate",
    "layerwise_probe",
    "make_plan",
    "run_transfer",
    "scl_combine",
    "SymEig",
    "pinv_quadratic_trace",
    "power_spectral_norm",
    "sym_eig",
    "TrainConfig",
    "TrainHistory",
    "cosine_lr",
    "desk_config",
    "sgd_step",
    "train",
    "SyntheticSpec",
    "TransferPairSpec",
    "make_classification_task",
    "make_transfer_pair",
]
