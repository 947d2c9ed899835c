"""Downstream evaluation of learned representations.

Three independent predictors score a frozen encoding: a one-hidden-layer MLP
probe, logistic regression (both trained with plain BCE, no fairness terms),
and a random forest. ``cross_validate`` runs the k-fold protocol — encode,
fit on the train fold, report fairness metrics on the test fold — and
aggregates mean and sample standard deviation per metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .data import Dataset, batches, make_folds, fold_train_indices
from .forest import ForestSpec, train_forest
from .metrics import FairnessReport, PredictionBatch, evaluate, threshold_predictions
from .model import TrainedStack
from .nn import MLP, Adam


@dataclass
class ProbeSpec:
    hidden: int = 20
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 0:
            raise ValueError(f"hidden must be >= 0 (0 = linear), got {self.hidden}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs/batch_size must be >= 1 and lr > 0")


class MLPPredictor:
    """Thresholded sigmoid-MLP predictor, optionally behind a frozen encoder."""

    def __init__(self, mlp: MLP, stack: TrainedStack | None = None, threshold: float = 0.5):
        self.mlp = mlp
        self.stack = stack
        self.threshold = threshold

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.stack is not None:
            X = self.stack.encode(X)
        return self.mlp.forward_value(X).reshape(-1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return threshold_predictions(self.predict_proba(X), self.threshold)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)


def _fit_bce_mlp(X: np.ndarray, y: np.ndarray, dims: list[int], epochs: int,
                 lr: float, batch_size: int, seed: int) -> tuple[MLP, float, float]:
    """Minibatch-Adam BCE training; returns (net, first-epoch loss, last-epoch loss)."""
    n = X.shape[0]
    mlp = MLP(dims, np.random.default_rng(seed), output_activation="sigmoid")
    opt = Adam(mlp.params(), lr=lr)
    first = last = float("nan")
    for epoch in range(epochs):
        total = 0.0
        count = 0
        for idx in batches(n, batch_size, seed, epoch):
            opt.zero_grad()
            loss = ad.bce_loss(mlp.forward(Var(X[idx])),
                               y[idx].reshape(-1, 1).astype(float))
            ad.backward(loss)
            opt.step()
            total += loss.item()
            count += 1
        mean = total / count
        if epoch == 0:
            first = mean
        last = mean
    return mlp, first, last


def train_probe(stack: TrainedStack, X: np.ndarray, y: np.ndarray,
                spec: ProbeSpec | None = None) -> MLPPredictor:
    """Label probe on frozen encodings: encode X, fit hidden->sigmoid MLP
    with plain BCE. The stack is only ever read."""
    spec = spec or ProbeSpec()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    z = stack.encode(X)
    dims = [z.shape[1], spec.hidden, 1] if spec.hidden > 0 else [z.shape[1], 1]
    mlp, _, _ = _fit_bce_mlp(z, y, dims, spec.epochs, spec.lr, spec.batch_size, spec.seed)
    return MLPPredictor(mlp, stack=stack)


def train_sensitive_probe(stack: TrainedStack, X: np.ndarray, s: np.ndarray,
                          spec: ProbeSpec | None = None) -> MLPPredictor:
    """Adversarial audit: a fresh probe trained to recover the sensitive
    attribute from the encoding. Low held-out accuracy certifies removal."""
    return train_probe(stack, X, s, spec)


def train_logreg(features: np.ndarray, y: np.ndarray, seed: int = 0,
                 epochs: int = 500, lr: float = 0.05) -> MLPPredictor:
    """Logistic regression = single dense layer + sigmoid, full-batch Adam on
    BCE. Raises if the loss fails to decrease (non-convergence guard)."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    mlp = MLP([X.shape[1], 1], np.random.default_rng(seed), output_activation="sigmoid")
    opt = Adam(mlp.params(), lr=lr)
    target = y.reshape(-1, 1).astype(float)
    first = None
    for _ in range(epochs):
        opt.zero_grad()
        loss = ad.bce_loss(mlp.forward(Var(X)), target)
        ad.backward(loss)
        opt.step()
        if first is None:
            first = loss.item()
    if loss.item() >= first:
        raise RuntimeError(
            f"logistic regression failed to converge: loss {first:.6f} -> {loss.item():.6f}"
        )
    return MLPPredictor(mlp)


# ---------------------------------------------------------------------------
# Cross-validated fairness evaluation

MODEL_KINDS = ("logreg", "forest", "probe")


@dataclass
class CVResult:
    model_kind: str
    reports: list[FairnessReport]
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "folds": [r.to_json() for r in self.reports],
            "mean": self.mean,
            "std": self.std,
            "meta": self.meta,
        }


def aggregate_reports(reports: list[FairnessReport]) -> tuple[dict, dict]:
    """Per-metric mean and sample std (ddof=1); a metric undefined on any
    fold aggregates to None rather than a quietly-filtered number."""
    keys = reports[0].to_json().keys()
    mean: dict = {}
    std: dict = {}
    for key in keys:
        vals = [r.to_json()[key] for r in reports]
        if any(v is None for v in vals):
            mean[key] = None
            std[key] = None
            continue
        arr = np.asarray(vals, dtype=np.float64)
        mean[key] = float(arr.mean())
        std[key] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def _fit_kind(kind: str, z_train: np.ndarray, y_train: np.ndarray, seed: int,
              probe_spec: ProbeSpec | None, forest_spec: ForestSpec | None):
    if kind == "logreg":
        return train_logreg(z_train, y_train, seed=seed)
    if kind == "forest":
        spec = forest_spec or ForestSpec()
        if spec.seed != seed:
            spec = replace(spec, seed=seed)
        return train_forest(z_train, y_train, spec)
    if kind == "probe":
        spec = probe_spec or ProbeSpec()
        dims = [z_train.shape[1], spec.hidden, 1] if spec.hidden > 0 else [z_train.shape[1], 1]
        mlp, _, _ = _fit_bce_mlp(z_train, y_train, dims, spec.epochs, spec.lr,
                                 spec.batch_size, seed)
        return MLPPredictor(mlp)
    raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")


def cross_validate(model_kind: str, stack: TrainedStack, dataset: Dataset,
                   k: int = 5, seed: int = 0, eo_mode: str = "sum",
                   probe_spec: ProbeSpec | None = None,
                   forest_spec: ForestSpec | None = None) -> CVResult:
    """k-fold protocol: encode with the given (frozen) stack, fit the
    downstream model on each train fold, report fairness on the test fold.

    The sensitive column is never part of the model input; it enters only
    the evaluation. Folds are seeded and shared by callers that compare
    encodings (pass the same seed).
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}, expected one of {MODEL_KINDS}")
    z = stack.encode(dataset.X)
    plan = make_folds(dataset.n, k, seed)
    reports: list[FairnessReport] = []
    for fold in range(k):
        test_idx = plan.folds[fold]
        train_idx = fold_train_indices(plan, fold)
        predictor = _fit_kind(model_kind, z[train_idx], dataset.y[train_idx],
                              seed, probe_spec, forest_spec)
        pred = predictor.predict(z[test_idx])
        batch = PredictionBatch(pred, dataset.y[test_idx], dataset.s[test_idx])
        reports.append(evaluate(batch, eo_mode=eo_mode))
    mean, std = aggregate_reports(reports)
    return CVResult(
        model_kind=model_kind, reports=reports, mean=mean, std=std,
        meta={"k": k, "seed": seed, "std_kind": "sample (ddof=1)",
              "encoder_levels": stack.n_levels},
    )
