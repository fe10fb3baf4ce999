"""Classification losses for noisy-label training.

Every loss is defined on a post-softmax probability row and returns both its
value and its gradient with respect to the probability entries (treated as
free coordinates, no renormalization), so the finite-difference oracle can
check each one directly. Mapping to logit space happens in one place:
``numerics.softmax_backward``.

Includes the active-passive combiner, the negative-learning loss, and the
entropy-regularized batch objective with constant / linear weight schedules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .numerics import PROB_EPS, LabelVector, as_matrix

ALL_KINDS = (
    "CE",
    "FL",
    "MAE",
    "GCE",
    "RCE",
    "SCE",
    "NCE",
    "AGCE",
    "NNCE",
    "NL",
    "NCE+RCE",
    "NCE+AGCE",
    "ANL-CE",
)

# Hyperparameter defaults; every value can be overridden per spec/config.
DEFAULT_PARAMS = {
    "CE": {},
    "FL": {"gamma": 0.5},
    "MAE": {},
    "GCE": {"q": 0.7},
    "RCE": {"A": -4.0},
    "SCE": {"alpha": 1.0, "beta": 1.0, "A": -4.0},
    "NCE": {},
    "AGCE": {"a": 0.6, "q": 0.6},
    "NNCE": {},
    "NL": {},
    "NCE+RCE": {"alpha": 1.0, "beta": 1.0, "A": -4.0},
    "NCE+AGCE": {"alpha": 1.0, "beta": 1.0, "a": 0.6, "q": 0.6},
    "ANL-CE": {"alpha": 1.0, "beta": 1.0},
}


@dataclass(frozen=True)
class LambdaSchedule:
    """Entropy-weight schedule: constant, or a linear ramp from 0 to lambda_max."""

    kind: str
    lambda_max: float
    total_epochs: int

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise InvalidInputError(f"unknown schedule kind {self.kind!r}")
        if self.lambda_max < 0:
            raise InvalidInputError("lambda_max must be >= 0")
        if self.total_epochs < 1:
            raise InvalidInputError("total_epochs must be >= 1")


def lambda_at(schedule: LambdaSchedule, epoch: int) -> float:
    """Entropy weight active at a given epoch (0 at the start of a linear ramp,
    lambda_max at the last epoch)."""
    if not 0 <= epoch < schedule.total_epochs:
        raise InvalidInputError(
            f"epoch {epoch} out of range [0, {schedule.total_epochs})"
        )
    if schedule.kind == "constant":
        return schedule.lambda_max
    if schedule.total_epochs == 1:
        return schedule.lambda_max
    return schedule.lambda_max * epoch / (schedule.total_epochs - 1)


_REQUIRED = {
    "CE": (),
    "FL": ("gamma",),
    "MAE": (),
    "GCE": ("q",),
    "RCE": ("A",),
    "SCE": ("alpha", "beta", "A"),
    "NCE": (),
    "AGCE": ("a", "q"),
    "NNCE": (),
    "NL": (),
    "NCE+RCE": ("alpha", "beta", "A"),
    "NCE+AGCE": ("alpha", "beta", "a", "q"),
    "ANL-CE": ("alpha", "beta"),
}


def _check_param_ranges(kind: str, params: dict) -> None:
    if "gamma" in _REQUIRED[kind] and params["gamma"] < 0:
        raise InvalidInputError("gamma must be >= 0")
    if "q" in _REQUIRED[kind]:
        q = params["q"]
        if kind == "GCE" and not 0 < q <= 1:
            raise InvalidInputError("q must lie in (0, 1]")
        if kind != "GCE" and q <= 0:
            raise InvalidInputError("q must be > 0")
    if "A" in _REQUIRED[kind] and params["A"] >= 0:
        raise InvalidInputError("A must be < 0")
    if "a" in _REQUIRED[kind] and params["a"] <= 0:
        raise InvalidInputError("a must be > 0")
    for name in ("alpha", "beta"):
        if name in _REQUIRED[kind] and params[name] < 0:
            raise InvalidInputError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LossSpec:
    """Which loss to run, its hyperparameters, and an optional entropy schedule.

    Missing parameters are filled from DEFAULT_PARAMS for the kind.
    """

    kind: str
    params: dict = field(default_factory=dict)
    entropy_schedule: LambdaSchedule | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise InvalidInputError(f"loss {self.kind} takes no parameter {key!r}")
            merged[key] = float(value)
        missing = [p for p in _REQUIRED[self.kind] if p not in merged]
        if missing:
            raise InvalidInputError(f"loss {self.kind} missing parameters {missing}")
        _check_param_ranges(self.kind, merged)
        object.__setattr__(self, "params", merged)


@dataclass(frozen=True)
class LossGrad:
    """A loss value and its gradient with respect to one probability row."""

    value: float
    grad_wrt_probs: np.ndarray


# ---------------------------------------------------------------------------
# Batch kernels: (probs (n,k), targets (n,)) -> (values (n,), grads (n,k)).
# Probability entries are treated as free coordinates; logs see a clamped
# copy so saturated rows stay finite.


def _safe_log(p):
    return np.log(np.maximum(p, PROB_EPS))


def _safe_recip(p):
    # Derivative of log(clamp(p)): zero in the flat clamped region.
    return np.where(p > PROB_EPS, 1.0 / np.maximum(p, PROB_EPS), 0.0)


def _ce_batch(p, y):
    n = p.shape[0]
    rows = np.arange(n)
    p_y = p[rows, y]
    vals = -_safe_log(p_y)
    grads = np.zeros_like(p)
    grads[rows, y] = -_safe_recip(p_y)
    return vals, grads


def _focal_batch(p, y, gamma):
    n = p.shape[0]
    rows = np.arange(n)
    p_y = p[rows, y]
    one_minus = np.maximum(1.0 - p_y, 0.0)
    log_p = _safe_log(p_y)
    vals = -(one_minus**gamma) * log_p
    grads = np.zeros_like(p)
    if gamma > 0:
        # gamma * (1-p)^(gamma-1) vanishes against log p as p -> 1; floor the
        # base so the masked branch never raises 0 to a negative power.
        pow_m1 = np.where(
            one_minus > 0, np.maximum(one_minus, PROB_EPS) ** (gamma - 1.0), 0.0
        )
        grads[rows, y] = gamma * pow_m1 * log_p - (one_minus**gamma) * _safe_recip(p_y)
    else:
        grads[rows, y] = -_safe_recip(p_y)
    return vals, grads


def _mae_batch(p, y):
    n, k = p.shape
    q = np.zeros_like(p)
    q[np.arange(n), y] = 1.0
    vals = np.abs(q - p).sum(axis=1)
    grads = np.sign(p - q)
    return vals, grads


def _gce_batch(p, y, q):
    n = p.shape[0]
    rows = np.arange(n)
    p_y = p[rows, y]
    vals = (1.0 - p_y**q) / q
    grads = np.zeros_like(p)
    grads[rows, y] = -(np.maximum(p_y, PROB_EPS) ** (q - 1.0))
    return vals, grads


def _rce_batch(p, y, A):
    n = p.shape[0]
    rows = np.arange(n)
    off_target = p.sum(axis=1) - p[rows, y]
    vals = -A * off_target
    grads = np.full_like(p, -A)
    grads[rows, y] = 0.0
    return vals, grads


def _nce_batch(p, y):
    n = p.shape[0]
    rows = np.arange(n)
    u = -_safe_log(p)  # per-class CE terms, all >= 0
    num = u[rows, y]
    den = u.sum(axis=1)
    vals = num / den
    r = _safe_recip(p)
    grads = (num / den**2)[:, None] * r
    grads[rows, y] = -r[rows, y] * (den - num) / den**2
    return vals, grads


def _agce_batch(p, y, a, q):
    n = p.shape[0]
    rows = np.arange(n)
    p_y = p[rows, y]
    vals = ((a + 1.0) ** q - (a + p_y) ** q) / q
    grads = np.zeros_like(p)
    grads[rows, y] = -((a + p_y) ** (q - 1.0))
    return vals, grads


def _nnce_batch(p, y):
    n = p.shape[0]
    rows = np.arange(n)
    comp = 1.0 - p
    u = -_safe_log(comp)  # per-class negative-CE terms
    s = _safe_recip(comp)  # du/dp
    num = u[rows, y]
    den = u.sum(axis=1)
    vals = 1.0 - num / den
    grads = (num / den**2)[:, None] * s
    grads[rows, y] = -s[rows, y] * (den - num) / den**2
    return vals, grads


def _nl_batch(p, comp_y):
    n = p.shape[0]
    rows = np.arange(n)
    comp = 1.0 - p[rows, comp_y]
    vals = -_safe_log(comp)
    grads = np.zeros_like(p)
    grads[rows, comp_y] = _safe_recip(comp)
    return vals, grads


def _combo_batch(p, y, active_fn, passive_fn, alpha, beta):
    va, ga = active_fn(p, y)
    vp, gp = passive_fn(p, y)
    return alpha * va + beta * vp, alpha * ga + beta * gp


def batch_loss(spec: LossSpec, probs, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss values and probability-space gradients for a batch.

    ``targets`` are class indices; for the NL kind they are the complementary
    labels ("not this class") sampled by the caller.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise InvalidInputError(f"probs must be 2-D, got shape {p.shape}")
    y = _target_indices(targets, p.shape[1])
    if y.shape[0] != p.shape[0]:
        raise InvalidInputError(
            f"batch size mismatch: {p.shape[0]} rows vs {y.shape[0]} targets"
        )
    prm = spec.params
    kind = spec.kind
    if kind == "CE":
        return _ce_batch(p, y)
    if kind == "FL":
        return _focal_batch(p, y, prm["gamma"])
    if kind == "MAE":
        return _mae_batch(p, y)
    if kind == "GCE":
        return _gce_batch(p, y, prm["q"])
    if kind == "RCE":
        return _rce_batch(p, y, prm["A"])
    if kind == "SCE":
        return _combo_batch(
            p, y, _ce_batch, lambda pp, yy: _rce_batch(pp, yy, prm["A"]),
            prm["alpha"], prm["beta"],
        )
    if kind == "NCE":
        return _nce_batch(p, y)
    if kind == "AGCE":
        return _agce_batch(p, y, prm["a"], prm["q"])
    if kind == "NNCE":
        return _nnce_batch(p, y)
    if kind == "NL":
        return _nl_batch(p, y)
    if kind == "NCE+RCE":
        return _combo_batch(
            p, y, _nce_batch, lambda pp, yy: _rce_batch(pp, yy, prm["A"]),
            prm["alpha"], prm["beta"],
        )
    if kind == "NCE+AGCE":
        return _combo_batch(
            p, y, _nce_batch,
            lambda pp, yy: _agce_batch(pp, yy, prm["a"], prm["q"]),
            prm["alpha"], prm["beta"],
        )
    if kind == "ANL-CE":
        return _combo_batch(p, y, _nce_batch, _nnce_batch, prm["alpha"], prm["beta"])
    raise InvalidInputError(f"unknown loss kind {kind!r}")


def _target_indices(targets, num_classes: int) -> np.ndarray:
    if isinstance(targets, LabelVector):
        if targets.num_classes != num_classes:
            raise InvalidInputError(
                f"label num_classes {targets.num_classes} != probs cols {num_classes}"
            )
        return targets.labels
    y = np.asarray(targets, dtype=np.int64).ravel()
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InvalidInputError(f"targets must lie in [0, {num_classes})")
    return y


# ---------------------------------------------------------------------------
# Per-sample API. Each returns a LossGrad for one probability row.


def _single(kind, p, y, **params):
    p = np.asarray(p, dtype=np.float64).reshape(1, -1)
    spec = LossSpec(kind, params)
    vals, grads = batch_loss(spec, p, np.array([y]))
    return LossGrad(float(vals[0]), grads[0])


def ce(p, y) -> LossGrad:
    """Cross entropy -ln(p_y)."""
    return _single("CE", p, y)


def focal(p, y, gamma: float = 0.5) -> LossGrad:
    """Focal loss -(1-p_y)^gamma * ln(p_y); gamma=0 reduces to CE."""
    return _single("FL", p, y, gamma=gamma)


def mae(p, y) -> LossGrad:
    """Mean absolute error sum_k |q_k - p_k| against the one-hot target."""
    return _single("MAE", p, y)


def gce(p, y, q: float = 0.7) -> LossGrad:
    """Generalized cross entropy (1 - p_y^q)/q; q=1 gives 1-p_y, small q nears CE."""
    return _single("GCE", p, y, q=q)


def rce(p, y, A: float = -4.0) -> LossGrad:
    """Reverse cross entropy -A * sum_{k != y} p_k (A stands in for log 0)."""
    return _single("RCE", p, y, A=A)


def sce(p, y, alpha: float = 1.0, beta: float = 1.0, A: float = -4.0) -> LossGrad:
    """Symmetric cross entropy alpha*CE + beta*RCE."""
    return _single("SCE", p, y, alpha=alpha, beta=beta, A=A)


def nce(p, y) -> LossGrad:
    """Normalized cross entropy (-ln p_y) / (sum_k -ln p_k); value in [0, 1]."""
    return _single("NCE", p, y)


def agce(p, y, a: float = 0.6, q: float = 0.6) -> LossGrad:
    """Asymmetric generalized cross entropy ((a+1)^q - (a+p_y)^q)/q."""
    return _single("AGCE", p, y, a=a, q=q)


def nnce(p, y) -> LossGrad:
    """Normalized negative cross entropy 1 - (-ln(1-p_y)) / (sum_k -ln(1-p_k)).

    Passive: the value falls toward 0 as p_y -> 1, penalizing mass on
    non-target classes.
    """
    return _single("NNCE", p, y)


def nl_loss(p, complementary_label) -> LossGrad:
    """Negative-learning loss -ln(1 - p_c) for a complementary label c
    asserting "not this class"."""
    return _single("NL", p, complementary_label)


def apl_combine(active: LossGrad, passive: LossGrad, alpha: float = 1.0,
                beta: float = 1.0) -> LossGrad:
    """Active-passive combination alpha*active + beta*passive."""
    if alpha < 0 or beta < 0:
        raise InvalidInputError("alpha and beta must be >= 0")
    return LossGrad(
        alpha * active.value + beta * passive.value,
        alpha * active.grad_wrt_probs + beta * passive.grad_wrt_probs,
    )


# ---------------------------------------------------------------------------
# Entropy-regularized batch objective.


def _entropy_term(p):
    # Mean-entropy value and d/dp gradient, safe off the simplex (the
    # finite-difference oracle perturbs entries individually).
    n = p.shape[0]
    log_p = _safe_log(p)
    value = float(-(p * log_p).sum() / n)
    grad = -(log_p + 1.0) / n
    return value, grad


def regularized_batch_loss(
    spec: LossSpec, probs, labels, entropy_weight: float
) -> tuple[float, np.ndarray]:
    """Mean base loss over the batch plus entropy_weight * mean prediction
    entropy, with the combined gradient with respect to the probabilities.

    With entropy_weight=0 this is the mean base loss bitwise.
    """
    if entropy_weight < 0:
        raise InvalidInputError("entropy_weight must be >= 0")
    p = as_matrix(probs, "probs")
    vals, grads = batch_loss(spec, p, labels)
    n = p.shape[0]
    value = float(vals.mean())
    grad = grads / n
    if entropy_weight != 0.0:
        h_val, h_grad = _entropy_term(p)
        value += entropy_weight * h_val
        grad = grad + entropy_weight * h_grad
    return value, grad
