"""Deterministic simulator for decentralized online gradient descent.

Simulates gossip-based online learning over configurable network
topologies: doubly stochastic mixing matrices, a regularized logistic
online objective, synthetic and LIBSVM data streams, per-round metrics,
and closed-form regret/consensus bound checks.
"""

from .datagen import SyntheticSpec, synthetic_sample
from .engine import (
    Bounds,
    NetworkState,
    RunConfig,
    RunResult,
    auto_learning_rate,
    cog_round,
    dog_round,
    local_ogd_round,
    run_experiment,
)
from .ingest import Dataset, NodeStreams, kmeans, normalize, parse_libsvm, split_stoch_adv
from .losses import LabeledSample, LossSpec, gradient, loss, smoothness_bound
from .metrics import (
    BoundParams,
    MetricsRecord,
    average_loss,
    consensus_error,
    estimate_gradient_bounds,
    offline_comparator,
    regret_bound,
    static_regret,
)
from .mixing import MixingMatrix, build_mixing, sinkhorn_balance, spectral_gap, verify_doubly_stochastic
from .topology import Graph, build_topology, is_connected

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "BoundParams",
    "Dataset",
    "Graph",
    "LabeledSample",
    "LossSpec",
    "MetricsRecord",
    "MixingMatrix",
    "NetworkState",
    "NodeStreams",
    "RunConfig",
    "RunResult",
    "SyntheticSpec",
    "auto_learning_rate",
    "average_loss",
    "build_mixing",
    "build_topology",
    "cog_round",
    "consensus_error",
    "dog_round",
    "estimate_gradient_bounds",
    "gradient",
    "is_connected",
    "kmeans",
    "local_ogd_round",
    "loss",
    "normalize",
    "offline_comparator",
    "parse_libsvm",
    "regret_bound",
    "run_experiment",
    "sinkhorn_balance",
    "smoothness_bound",
    "spectral_gap",
    "split_stoch_adv",
    "static_regret",
    "synthetic_sample",
    "verify_doubly_stochastic",
]
