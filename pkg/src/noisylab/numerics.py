"""Dense numeric primitives: softmax, one-hot, entropy, and the
finite-difference gradient oracle that validates every analytic gradient
in this repo.

All arrays are 64-bit float, row-major. Probabilities are clamped to
[1e-12, 1] before any logarithm; the entropy convention is 0*log(1/0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError, OracleFailureError

# Floor applied to probabilities before any log; keeps one-hot softmax
# limits finite.
PROB_EPS = 1e-12

# Default central-difference step; balances truncation vs round-off at f64.
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class LabelVector:
    """Integer class labels together with the class count they index into."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise InvalidInputError(f"labels must be 1-D, got shape {labels.shape}")
        if self.num_classes < 2:
            raise InvalidInputError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInputError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )

    def __len__(self) -> int:
        return self.labels.size


def as_matrix(values, name: str = "input") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise InvalidInputError."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def validate_prob_batch(probs, name: str = "probs") -> np.ndarray:
    """Check the probability-batch invariants: entries in [0,1], rows sum to 1."""
    arr = as_matrix(probs, name)
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"{name} must be non-empty, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0 + 1e-9:
        raise InvalidInputError(f"{name} entries must lie in [0, 1]")
    row_sums = arr.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-9):
        worst = np.abs(row_sums - 1.0).max()
        raise InvalidInputError(f"{name} rows must sum to 1 (max deviation {worst:.3e})")
    return arr


def softmax(logits) -> np.ndarray:
    """Row-wise softmax, stabilized by per-row max subtraction.

    Rows of the result sum to 1 within 1e-12 and never overflow, even for
    logits of magnitude 1e4.
    """
    z = as_matrix(logits, "logits")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels: LabelVector) -> np.ndarray:
    """One-hot encode a label vector into an (n, num_classes) probability batch."""
    n = len(labels)
    out = np.zeros((n, labels.num_classes), dtype=np.float64)
    out[np.arange(n), labels.labels] = 1.0
    return out


def mean_prediction_entropy(probs) -> float:
    """Mean Shannon entropy (natural log) of the rows of a probability batch.

    Returns (1/n) * sum_i sum_k p_ik * ln(1/p_ik), with 0*ln(1/0) taken as 0.
    The result lies in [0, ln(num_classes)].
    """
    p = validate_prob_batch(probs)
    log_p = np.log(np.maximum(p, PROB_EPS))
    return float(-(p * log_p).sum() / p.shape[0])


def entropy_reduction(h_early: float, h_late: float) -> float:
    """Drop in mean entropy between an earlier and a later epoch (may be < 0)."""
    if h_early < 0 or h_late < 0:
        raise InvalidInputError("entropies must be non-negative")
    return h_early - h_late


def softmax_backward(probs, grad_wrt_probs) -> np.ndarray:
    """Map a gradient w.r.t. softmax outputs to a gradient w.r.t. logits.

    Row-wise: dL/dz_j = p_j * (g_j - sum_k g_k p_k).
    """
    p = as_matrix(probs, "probs")
    g = as_matrix(grad_wrt_probs, "grad_wrt_probs")
    if p.shape != g.shape:
        raise InvalidInputError(f"shape mismatch: probs {p.shape} vs grad {g.shape}")
    inner = (g * p).sum(axis=1, keepdims=True)
    return p * (g - inner)


def finite_diff_gradient(
    f: Callable[[np.ndarray], float],
    x,
    step: float = DEFAULT_FD_STEP,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    The independent oracle for every analytic gradient in the repo: it never
    shares code with the path it checks.
    """
    if step <= 0:
        raise InvalidInputError(f"step must be positive, got {step}")
    x = np.asarray(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        f_plus = float(f(x + e))
        f_minus = float(f(x - e))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleFailureError(f"f returned non-finite value near coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a, b, floor: float = 1e-12) -> float:
    """Normwise relative difference used by the gradient-check suites."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
