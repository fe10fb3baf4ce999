"""noisylab: robust-loss training under label noise, with entropy
regularization, seeded noise injection, and a deterministic experiment
harness."""

from .data import LabeledDataset, load_feature_cache, load_mnist_idx, synth_blobs, train_val_split
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    InvalidInputError,
    NoisylabError,
    OracleFailureError,
)
from .experiment import EpochRecord, ExperimentConfig, delta_h, emit_metrics, parse_config, run_experiment
from .losses import LambdaSchedule, LossGrad, LossSpec, lambda_at, regularized_batch_loss
from .model import Architecture, ModelParams, OptimState, clip_global_norm, forward, backward, init_params, sgd_step
from .noise import ClassFlipMap, NoiseSpec, builtin_flip_map, corrupt_asymmetric, corrupt_symmetric, empirical_noise_rate
from .numerics import (
    LabelVector,
    entropy_reduction,
    finite_diff_gradient,
    mean_prediction_entropy,
    one_hot,
    softmax,
    softmax_backward,
)

__version__ = "0.1.0"
