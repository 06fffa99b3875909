"""Desk-scale neural-network harness built on the GEM kernels."""

from .data import IdxFormatError, load_idx, make_synthetic, read_idx, write_idx
from .estimators import ActivationTransformer, GemMLPClassifier
from .network import (
    DenseLayer,
    DenseNet,
    GmgluLayer,
    InitConfig,
    StaleTapeError,
    gmglu_forward,
    gradient_check,
    init_dense_net,
    softmax_cross_entropy,
)
from .optim import AdamW, Schedule, SGDMomentum
from .prng import Xoshiro256, splitmix64
from .probes import SuppressionProbeResult, dead_neuron_experiment, suppression_probe
from .train import Dataset, TrainConfig, TrainReport, parse_config, run_config, train

__all__ = [
    "ActivationTransformer",
    "AdamW",
    "Dataset",
    "DenseLayer",
    "DenseNet",
    "GemMLPClassifier",
    "GmgluLayer",
    "IdxFormatError",
    "InitConfig",
    "SGDMomentum",
    "Schedule",
    "StaleTapeError",
    "SuppressionProbeResult",
    "TrainConfig",
    "TrainReport",
    "Xoshiro256",
    "dead_neuron_experiment",
    "gmglu_forward",
    "gradient_check",
    "init_dense_net",
    "load_idx",
    "make_synthetic",
    "parse_config",
    "read_idx",
    "run_config",
    "softmax_cross_entropy",
    "splitmix64",
    "suppression_probe",
    "train",
    "write_idx",
]
