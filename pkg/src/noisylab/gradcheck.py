"""Full gradient-oracle suite: every loss kind (plus the entropy-regularized
objective and the model backward pass) checked against central finite
differences in logit space.

Used by the `noisylab grad-check` CLI command and by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .losses import ALL_KINDS, LossSpec, batch_loss, regularized_batch_loss
from .numerics import finite_diff_gradient, relative_error, softmax, softmax_backward

GRAD_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    points: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err < GRAD_TOL


def _random_params(kind: str, gen: np.random.Generator) -> dict:
    params = {}
    if kind == "FL":
        params["gamma"] = gen.uniform(0.0, 3.0)
    if kind == "GCE":
        params["q"] = gen.uniform(0.1, 1.0)
    if kind in ("RCE", "SCE", "NCE+RCE"):
        params["A"] = gen.uniform(-6.0, -1.0)
    if kind in ("AGCE", "NCE+AGCE"):
        params["a"] = gen.uniform(0.1, 2.0)
        params["q"] = gen.uniform(0.1, 2.0)
    if kind in ("SCE", "NCE+RCE", "NCE+AGCE", "ANL-CE"):
        params["alpha"] = gen.uniform(0.1, 2.0)
        params["beta"] = gen.uniform(0.1, 2.0)
    return params


def check_loss_gradients(kind: str, points: int = 100, seed: int = 0) -> CheckResult:
    """Compare d(loss o softmax)/d(logits) against finite differences at
    random (logits, label, hyperparameter) points."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    for _ in range(points):
        k = int(gen.integers(2, 11))
        z = gen.normal(0.0, 2.0, size=k)
        y = int(gen.integers(0, k))
        spec = LossSpec(kind, _random_params(kind, gen))

        def value_of(zv):
            p = softmax(zv.reshape(1, -1))
            vals, _ = batch_loss(spec, p, np.array([y]))
            return float(vals[0])

        p = softmax(z.reshape(1, -1))
        _, grads = batch_loss(spec, p, np.array([y]))
        analytic = softmax_backward(p, grads)[0]
        numeric = finite_diff_gradient(value_of, z)
        worst = max(worst, relative_error(analytic, numeric))
    return CheckResult(kind, worst, points)


def check_entropy_regularizer(points: int = 100, seed: int = 1) -> CheckResult:
    """Check the entropy-regularized batch objective end to end in logit space."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    for _ in range(points):
        k = int(gen.integers(2, 8))
        n = int(gen.integers(1, 5))
        z = gen.normal(0.0, 2.0, size=(n, k))
        y = gen.integers(0, k, size=n)
        weight = float(gen.uniform(0.01, 0.5))
        spec = LossSpec("CE")

        def value_of(flat):
            p = softmax(flat.reshape(n, k))
            value, _ = regularized_batch_loss(spec, p, y, weight)
            return value

        p = softmax(z)
        _, grad_p = regularized_batch_loss(spec, p, y, weight)
        analytic = softmax_backward(p, grad_p).ravel()
        numeric = finite_diff_gradient(value_of, z.ravel())
        worst = max(worst, relative_error(analytic, numeric))
    return CheckResult("CE+entropy", worst, points)


def check_model_pipeline(points: int = 20, seed: int = 2) -> CheckResult:
    """Check d(mean CE)/d(every parameter) of a small MLP against finite
    differences on the flattened parameter vector."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    spec = LossSpec("CE")
    for trial in range(points):
        arch = model_mod.Architecture("mlp", depth=2, hidden=4,
                                      activation="tanh" if trial % 2 else "relu")
        params = model_mod.init_params(arch, 5, 3, seed=int(gen.integers(1 << 30)))
        X = gen.normal(0.0, 1.0, size=(6, 5))
        y = gen.integers(0, 3, size=6)

        def value_of(flat):
            saved = params.flatten()
            params.assign_flat(flat)
            logits, _ = model_mod.forward(params, X)
            value, _ = regularized_batch_loss(spec, softmax(logits), y, 0.0)
            params.assign_flat(saved)
            return value

        logits, cache = model_mod.forward(params, X)
        probs = softmax(logits)
        _, grad_p = regularized_batch_loss(spec, probs, y, 0.0)
        grad_z = softmax_backward(probs, grad_p)
        w_grads, b_grads = model_mod.backward(params, cache, grad_z)
        analytic = np.concatenate([g.ravel() for g in w_grads] +
                                  [g.ravel() for g in b_grads])
        numeric = finite_diff_gradient(value_of, params.flatten())
        worst = max(worst, relative_error(analytic, numeric))
    return CheckResult("model-pipeline", worst, points)


def run_full_suite(points: int = 100, seed: int = 0) -> list[CheckResult]:
    """Gradient checks for all loss kinds, the entropy term, and the model."""
    results = [check_loss_gradients(kind, points, seed + i)
               for i, kind in enumerate(ALL_KINDS)]
    results.append(check_entropy_regularizer(points, seed + 100))
    results.append(check_model_pipeline(max(10, points // 5), seed + 101))
    return results
