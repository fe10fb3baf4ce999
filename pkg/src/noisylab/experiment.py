"""Experiment harness: flat key=value configs, the seeded train/eval loop
(noise injection -> minibatch SGD with the selected loss and entropy-weight
schedule -> per-epoch metrics), and deterministic CSV / JSON-lines output.

Given the same config and seed, two runs produce byte-identical metrics
files; wall-clock timing is kept out of the files unless explicitly
requested (``include_timing``), because it is the one nondeterministic
quantity.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import model as model_mod
from .errors import ConfigError, DivergenceError, InvalidInputError
from .losses import ALL_KINDS, LambdaSchedule, LossSpec, lambda_at, regularized_batch_loss
from .noise import ClassFlipMap, NoiseSpec, builtin_flip_map, corrupt, parse_flip_map
from .numerics import LabelVector, mean_prediction_entropy, softmax, softmax_backward

CSV_HEADER = "epoch,lambda,train_loss,train_acc,val_acc,test_acc,mean_entropy,ms"

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, tag: int, extra: int = 0) -> int:
    """Stable splitmix64-style derivation of per-purpose seeds."""
    x = (seed ^ (tag * 0x9E3779B97F4A7C15) ^ (extra * 0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


# Tags for the independent random streams of one experiment.
_TAG_DATA, _TAG_TESTDATA, _TAG_SPLIT, _TAG_NOISE, _TAG_INIT, _TAG_SHUFFLE, _TAG_NL = range(1, 8)


def _stream(seed: int, tag: int, extra: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, tag, extra)))


@dataclass(frozen=True)
class EpochRecord:
    """Metrics captured at the end of one training epoch."""

    epoch: int
    entropy_weight: float
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    mean_entropy: float
    wall_ms: float


@dataclass
class ExperimentConfig:
    """Everything one training run needs; see README for the config-file keys."""

    dataset: str = ""
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_test_images: str = ""
    mnist_test_labels: str = ""
    features_path: str = ""
    features_test_path: str = ""
    synth_n: int = 2000
    synth_classes: int = 10
    synth_dim: int = 32
    synth_separation: float = 3.0
    synth_test_n: int = 1000
    train_subset: int = 0
    noise: NoiseSpec | None = None
    loss: LossSpec = field(default_factory=lambda: LossSpec("CE"))
    arch: model_mod.Architecture = field(default_factory=model_mod.Architecture)
    lr: float = 0.001
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 0.0
    clip_norm: float = 5.0
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    val_fraction: float = 0.1
    out: str = "metrics.csv"

    def __post_init__(self):
        if self.dataset not in ("mnist", "features", "synth"):
            raise ConfigError(f"dataset must be mnist|features|synth, got {self.dataset!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.train_subset < 0:
            raise ConfigError("train_subset must be >= 0 (0 means all)")


_INT_KEYS = {"synth_n", "synth_classes", "synth_dim", "synth_test_n", "train_subset",
             "mlp_depth", "mlp_hidden", "batch_size", "epochs", "seed", "noise_seed"}
_FLOAT_KEYS = {"synth_separation", "noise_rate", "lr", "momentum", "weight_decay",
               "clip_norm", "val_fraction", "gamma", "q", "A", "a", "alpha", "beta"}
_BOOL_KEYS = {"nesterov"}
_STR_KEYS = {"dataset", "mnist_images", "mnist_labels", "mnist_test_images",
             "mnist_test_labels", "features_path", "features_test_path", "noise",
             "noise_map", "loss", "entropy_schedule", "arch", "activation", "out"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS

_LOSS_PARAM_KEYS = ("gamma", "q", "A", "a", "alpha", "beta")


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return raw


def _parse_schedule(text: str, epochs: int) -> LambdaSchedule | None:
    if text.lower() in ("", "none"):
        return None
    parts = text.split(":")
    if len(parts) != 2 or parts[0] not in ("constant", "linear"):
        raise ConfigError(
            f"entropy_schedule must be 'constant:<max>' or 'linear:<max>', got {text!r}"
        )
    try:
        lam = float(parts[1])
    except ValueError:
        raise ConfigError(f"bad entropy_schedule weight {parts[1]!r}") from None
    try:
        return LambdaSchedule(parts[0], lam, epochs)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def _canonical_loss_kind(text: str) -> str:
    upper = text.strip().upper()
    if upper not in ALL_KINDS:
        raise ConfigError(f"unknown loss {text!r} (known: {', '.join(ALL_KINDS)})")
    return upper


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from parsed key/value pairs."""
    raw = dict(raw)
    epochs = int(raw.get("epochs", 100))
    seed = int(raw.get("seed", 0))

    loss_kind = _canonical_loss_kind(str(raw.pop("loss", "ce")))
    params = {k: raw.pop(k) for k in _LOSS_PARAM_KEYS if k in raw}
    schedule = _parse_schedule(str(raw.pop("entropy_schedule", "none")), epochs)
    try:
        loss = LossSpec(loss_kind, params, schedule)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None

    noise_kind = str(raw.pop("noise", "none")).lower()
    noise_rate = float(raw.pop("noise_rate", 0.0))
    noise_map = str(raw.pop("noise_map", ""))
    noise_seed = int(raw.pop("noise_seed", derive_seed(seed, _TAG_NOISE)))
    noise = None
    if noise_kind not in ("none", "symmetric", "asymmetric"):
        raise ConfigError(f"noise must be none|symmetric|asymmetric, got {noise_kind!r}")
    if noise_kind != "none":
        try:
            flip = None
            if noise_kind == "asymmetric":
                if not noise_map:
                    raise ConfigError("asymmetric noise requires noise_map")
                flip = _resolve_flip_map(noise_map)
            noise = NoiseSpec(noise_kind, noise_rate, noise_seed, flip)
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None

    arch_kind = str(raw.pop("arch", "linear")).lower()
    try:
        arch = model_mod.Architecture(
            arch_kind,
            depth=int(raw.pop("mlp_depth", 3)),
            hidden=int(raw.pop("mlp_hidden", 256)),
            activation=str(raw.pop("activation", "relu")),
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None

    known = {k: raw.pop(k) for k in list(raw) if k in _ALL_KEYS}
    if raw:
        raise ConfigError(f"unknown config key {sorted(raw)[0]!r}")
    if "dataset" not in known:
        raise ConfigError("config must set 'dataset = mnist|features|synth'")
    cfg = ExperimentConfig(loss=loss, noise=noise, arch=arch, **known)
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in (0, 1)")
    return cfg


def _resolve_flip_map(text: str) -> ClassFlipMap:
    """Builtin map name, or a custom "src>dst" list sized by its own indices
    (widened to the dataset's class count at corruption time)."""
    if text in ("mnist", "cifar10", "cifar100"):
        return builtin_flip_map(text)
    pairs = parse_flip_map(text, num_classes=1 << 30).pairs
    max_index = max(max(s, d) for s, d in pairs)
    return ClassFlipMap(pairs, max_index + 1)


def _widen_flip_map(spec: NoiseSpec, num_classes: int) -> NoiseSpec:
    """Re-home a flip map onto the dataset's class count when compatible."""
    fm = spec.flip_map
    if fm is None or fm.num_classes == num_classes:
        return spec
    if all(s < num_classes and d < num_classes for s, d in fm.pairs):
        return replace(spec, flip_map=ClassFlipMap(fm.pairs, num_classes))
    raise InvalidInputError(
        f"flip map over {fm.num_classes} classes does not fit a "
        f"{num_classes}-class dataset"
    )


def parse_config(path) -> ExperimentConfig:
    """Parse a flat "key = value" config file ('#' starts a comment).

    Unknown keys are rejected by name; unset keys take the protocol defaults
    (lr 0.001, momentum 0.9, clip_norm 5.0, batch_size 256).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        raw[key] = _parse_value(key, value)
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Data assembly


def _load_pool_and_test(cfg: ExperimentConfig):
    if cfg.dataset == "mnist":
        if not cfg.mnist_images or not cfg.mnist_labels:
            raise ConfigError("mnist dataset requires mnist_images and mnist_labels")
        pool = data_mod.load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
        test = None
        if cfg.mnist_test_images and cfg.mnist_test_labels:
            test = data_mod.load_mnist_idx(cfg.mnist_test_images, cfg.mnist_test_labels)
        return pool, test
    if cfg.dataset == "features":
        if not cfg.features_path:
            raise ConfigError("features dataset requires features_path")
        pool = data_mod.load_feature_cache(cfg.features_path)
        test = None
        if cfg.features_test_path:
            test = data_mod.load_feature_cache(cfg.features_test_path)
        return pool, test
    pool = data_mod.synth_blobs(cfg.synth_n, cfg.synth_classes, cfg.synth_dim,
                                cfg.synth_separation, derive_seed(cfg.seed, _TAG_DATA))
    test = data_mod.synth_blobs(cfg.synth_test_n, cfg.synth_classes, cfg.synth_dim,
                                cfg.synth_separation, derive_seed(cfg.seed, _TAG_TESTDATA))
    return pool, test


def _accuracy(logits: np.ndarray, labels: LabelVector) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels.labels))


def _complementary_labels(labels: np.ndarray, num_classes: int,
                          gen: np.random.Generator) -> np.ndarray:
    offsets = gen.integers(1, num_classes, size=labels.shape[0])
    return (labels + offsets) % num_classes


def run_experiment(cfg: ExperimentConfig) -> list[EpochRecord]:
    """Run the full train/eval loop and return one EpochRecord per epoch.

    Only training labels are corrupted; validation and test labels stay
    clean. Without a separate test source the validation split doubles as
    the test set. Fully deterministic given cfg.seed (except wall_ms).
    """
    pool, test = _load_pool_and_test(cfg)
    train, val = data_mod.train_val_split(pool, cfg.val_fraction,
                                          derive_seed(cfg.seed, _TAG_SPLIT))
    if cfg.train_subset:
        keep = min(cfg.train_subset, len(train))
        train = data_mod.subset(train, np.arange(keep))
    if test is None:
        test = val

    train_labels = train.labels
    if cfg.noise is not None:
        train_labels = corrupt(train_labels, _widen_flip_map(cfg.noise, train.num_classes))

    k = train.num_classes
    params = model_mod.init_params(cfg.arch, train.features.shape[1], k,
                                   derive_seed(cfg.seed, _TAG_INIT))
    state = model_mod.OptimState(lr=cfg.lr, momentum=cfg.momentum,
                                 nesterov=cfg.nesterov,
                                 weight_decay=cfg.weight_decay,
                                 clip_norm=cfg.clip_norm)
    schedule = cfg.loss.entropy_schedule
    n = len(train)
    y_train = train_labels.labels
    records = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        weight = lambda_at(schedule, epoch) if schedule is not None else 0.0
        targets = y_train
        if cfg.loss.kind == "NL":
            targets = _complementary_labels(y_train, k,
                                            _stream(cfg.seed, _TAG_NL, epoch))
        perm = _stream(cfg.seed, _TAG_SHUFFLE, epoch).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            X = train.features[batch]
            logits, cache = model_mod.forward(params, X)
            probs = softmax(logits)
            value, grad_p = regularized_batch_loss(cfg.loss, probs, targets[batch], weight)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            grad_z = softmax_backward(probs, grad_p)
            grads = model_mod.backward(params, cache, grad_z)
            grads = model_mod.clip_global_norm(grads, cfg.clip_norm)
            try:
                model_mod.sgd_step(params, state, grads)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"{exc} (epoch {epoch}, batch {start // cfg.batch_size})"
                ) from None
            loss_sum += value * len(batch)

        train_logits, _ = model_mod.forward(params, train.features)
        val_logits, _ = model_mod.forward(params, val.features)
        test_logits, _ = model_mod.forward(params, test.features)
        records.append(EpochRecord(
            epoch=epoch,
            entropy_weight=weight,
            train_loss=loss_sum / n,
            train_acc=_accuracy(train_logits, train_labels),
            val_acc=_accuracy(val_logits, val.labels),
            test_acc=_accuracy(test_logits, test.labels),
            mean_entropy=mean_prediction_entropy(softmax(train_logits)),
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        ))
    return records


def delta_h(records) -> float:
    """Mean-entropy drop between the first and last epoch records."""
    if len(records) < 2:
        raise InvalidInputError("need at least 2 epoch records")
    return records[0].mean_entropy - records[-1].mean_entropy


def _format_row(r: EpochRecord, include_timing: bool) -> str:
    ms = int(round(r.wall_ms)) if include_timing else 0
    return (f"{r.epoch},{r.entropy_weight:.6f},{r.train_loss:.6f},"
            f"{r.train_acc:.6f},{r.val_acc:.6f},{r.test_acc:.6f},"
            f"{r.mean_entropy:.6f},{ms}")


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_metrics(records, path, include_timing: bool = False) -> None:
    """Write the per-epoch CSV (6-decimal floats, one row per epoch, trailing
    '# delta_h=' summary), atomically.

    Timing is zeroed by default so identical runs yield byte-identical files.
    """
    if not records:
        raise InvalidInputError("no records to emit")
    lines = [CSV_HEADER]
    lines += [_format_row(r, include_timing) for r in records]
    dh = records[0].mean_entropy - records[-1].mean_entropy
    lines.append(f"# delta_h={dh:.6f}")
    _atomic_write(path, "\n".join(lines) + "\n")


def emit_metrics_jsonl(records, path, include_timing: bool = False) -> None:
    """JSON-lines mirror of the CSV: one record object per epoch."""
    if not records:
        raise InvalidInputError("no records to emit")
    lines = []
    for r in records:
        obj = asdict(r)
        obj["wall_ms"] = int(round(r.wall_ms)) if include_timing else 0
        lines.append(json.dumps(obj, sort_keys=True))
    _atomic_write(path, "\n".join(lines) + "\n")
