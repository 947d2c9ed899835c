"""Alternating min-max training of the stack, one level at a time.

Per batch the main step updates encoder, decoder and classifier to minimize
alpha*L_rec + gamma*L_class - beta*L_adv with the adversary frozen; then the
adversary alone takes ``adv_steps`` minimization steps on BCE(f(z), s) against
the freshly updated (and detached) codes. Levels train sequentially: by
default earlier levels are frozen and their codes precomputed; a fine-tune
mode lets gradients flow into earlier encoders instead.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .data import Dataset, batches
from .metrics import PredictionBatch, UndefinedMetricError, delta_dp, delta_eo, delta_eopp
from .model import Level, StackSpec, TrainedStack, encode, level_loss, build, spec_hash
from .nn import Adam


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss or parameter value."""


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    lr: float = 0.01
    lr_adv: float | None = None       # None -> same as lr
    adv_steps: int = 1                # adversary updates per main update
    seed: int = 0
    freeze_previous: bool = True
    adversary_warm_start: bool = False
    eopp_adv_label: int = 0           # adversary subset under eopp: rows with y == this

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.adv_steps < 1:
            raise ValueError(f"adv_steps must be >= 1, got {self.adv_steps}")
        if self.lr <= 0 or (self.lr_adv is not None and self.lr_adv <= 0):
            raise ValueError("learning rates must be positive")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.eopp_adv_label not in (0, 1):
            raise ValueError(f"eopp_adv_label must be 0 or 1, got {self.eopp_adv_label}")

    @property
    def adversary_lr(self) -> float:
        return self.lr if self.lr_adv is None else self.lr_adv

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EpochRecord:
    level: int
    epoch: int
    loss_rec: float
    loss_adv: float       # nan if every batch had an empty adversary subset
    loss_class: float
    adv_acc: float        # adversary accuracy on the validation split (nan if none)
    val_dp: float
    val_eo: float
    val_eopp: float


LOG_COLUMNS = ("level", "epoch", "loss_rec", "loss_adv", "loss_class",
               "adv_acc", "val_dp", "val_eo", "val_eopp")


@dataclass
class TrainLog:
    level: int
    records: list[EpochRecord] = field(default_factory=list)


def write_log_csv(logs, path_or_file, comment: str | None = None) -> None:
    """Flatten one or more TrainLogs to CSV (optionally preceded by a single
    ``#`` comment line)."""
    if isinstance(logs, TrainLog):
        logs = [logs]
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for log in logs:
            for r in log.records:
                writer.writerow([getattr(r, c) for c in LOG_COLUMNS])
    finally:
        if own:
            fh.close()


def log_csv_string(logs, comment: str | None = None) -> str:
    buf = io.StringIO()
    write_log_csv(logs, buf, comment)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Level training


def _adversary_input(level: Level, z: np.ndarray, y: np.ndarray,
                     eopp_label: int) -> tuple[np.ndarray, np.ndarray]:
    """Criterion-consistent adversary input rows; returns (rows, row index)."""
    if level.criterion == "eopp":
        idx = np.flatnonzero(y == eopp_label)
    else:
        idx = np.arange(y.shape[0])
    rows = z[idx]
    if level.criterion == "eo":
        rows = np.hstack([rows, y[idx].reshape(-1, 1).astype(float)])
    return rows, idx


def _adversary_accuracy(level: Level, z_val: np.ndarray, y_val: np.ndarray,
                        s_val: np.ndarray, eopp_label: int) -> float:
    rows, idx = _adversary_input(level, z_val, y_val, eopp_label)
    if idx.size == 0:
        return math.nan
    pred = (level.adversary.forward_value(rows) >= 0.5).astype(int).reshape(-1)
    return float((pred == s_val[idx]).mean())


def _classifier_gaps(level: Level, z_val: np.ndarray, y_val: np.ndarray,
                     s_val: np.ndarray) -> tuple[float, float, float]:
    pred = (level.classifier.forward_value(z_val) >= 0.5).astype(int).reshape(-1)
    try:
        batch = PredictionBatch(pred, y_val, s_val)
    except ValueError:
        return math.nan, math.nan, math.nan
    out = []
    for fn in (delta_dp, delta_eo, delta_eopp):
        try:
            out.append(fn(batch))
        except UndefinedMetricError:
            out.append(math.nan)
    return tuple(out)


def _run_level(level: Level, level_index: int, prefix: list[Level],
               X0: np.ndarray, y: np.ndarray, s: np.ndarray,
               alpha: float, beta: float, gamma: float, root_mse: bool,
               cfg: TrainConfig, val: tuple | None) -> TrainLog:
    """The alternating-update loop for one level.

    ``X0`` is the raw stack input when ``prefix`` is non-empty (fine-tuning:
    batches are forwarded through the earlier encoders inside the graph);
    with an empty prefix it is this level's input matrix directly.
    """
    n = X0.shape[0]
    main_params = level.main_params() + [p for lv in prefix for p in lv.encoder.params()]
    adam_main = Adam(main_params, lr=cfg.lr)
    adam_adv = Adam(level.adv_params(), lr=cfg.adversary_lr)
    log = TrainLog(level=level_index)

    for epoch in range(cfg.epochs):
        rec_sum = cls_sum = 0.0
        adv_sum = 0.0
        n_batches = 0
        n_adv_batches = 0
        for b_num, idx in enumerate(batches(n, cfg.batch_size, (cfg.seed, level_index), epoch)):
            where = f"level {level_index}, epoch {epoch}, batch {b_num}"
            try:
                xb = X0[idx]
                yb, sb = y[idx], s[idx]
                # Main step: encoder/decoder/classifier (and unfrozen prefix
                # encoders) descend; the adversary term enters negated.
                ad.zero_grads(main_params + level.adv_params())
                z_in: Var = Var(xb)
                for lv in prefix:
                    z_in = lv.encode_var(z_in)
                parts = level_loss(level, z_in, yb, sb, alpha, beta, gamma,
                                   eopp_label=cfg.eopp_adv_label, root_mse=root_mse)
                main_obj = ad.add(ad.scale(parts.rec, alpha), ad.scale(parts.cls, gamma))
                if parts.adv is not None:
                    main_obj = ad.add(main_obj, ad.scale(parts.adv, -beta))
                ad.backward(main_obj)
                adam_main.step()

                rec_sum += parts.rec.item()
                cls_sum += parts.cls.item()
                n_batches += 1
                if parts.adv is not None:
                    adv_sum += parts.adv.item()
                    n_adv_batches += 1

                # Adversary steps on the updated, detached codes.
                z_now = xb
                for lv in prefix:
                    z_now = lv.encode_value(z_now)
                z_now = level.encode_value(z_now)
                rows, sub = _adversary_input(level, z_now, yb, cfg.eopp_adv_label)
                if sub.size:
                    target = sb[sub].reshape(-1, 1).astype(float)
                    for _ in range(cfg.adv_steps):
                        ad.zero_grads(level.adv_params())
                        loss = ad.bce_loss(level.adversary.forward(Var(rows)), target)
                        ad.backward(loss)
                        adam_adv.step()
            except FloatingPointError as exc:
                raise DivergenceError(f"non-finite value at {where}: {exc}") from exc

        if val is not None:
            Xv, yv, sv = val
            zv = Xv
            for lv in prefix:
                zv = lv.encode_value(zv)
            zv = level.encode_value(zv)
            adv_acc = _adversary_accuracy(level, zv, yv, sv, cfg.eopp_adv_label)
            dp, eo, eopp = _classifier_gaps(level, zv, yv, sv)
        else:
            adv_acc = dp = eo = eopp = math.nan
        log.records.append(EpochRecord(
            level=level_index, epoch=epoch,
            loss_rec=rec_sum / max(n_batches, 1),
            loss_adv=adv_sum / n_adv_batches if n_adv_batches else math.nan,
            loss_class=cls_sum / max(n_batches, 1),
            adv_acc=adv_acc, val_dp=dp, val_eo=eo, val_eopp=eopp,
        ))
    level.trained = True
    return log


def train_level(level: Level, z_prev: np.ndarray, y: np.ndarray, s: np.ndarray,
                alpha: float, beta: float, gamma: float, cfg: TrainConfig,
                level_index: int = 0, val: tuple | None = None,
                root_mse: bool = False) -> TrainLog:
    """Train one level on precomputed inputs ``z_prev`` (earlier levels frozen).

    ``val``, when given, is a ``(z_prev_val, y_val, s_val)`` triple used for
    the per-epoch adversary-accuracy and classifier-gap columns of the log.
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    s = np.asarray(s).reshape(-1)
    return _run_level(level, level_index, [], z_prev, y, s,
                      alpha, beta, gamma, root_mse, cfg, val)


def _warm_start_adversary(target: Level, source: Level) -> int:
    """Copy adversary weights layer-wise where shapes match; returns the
    number of layers copied."""
    copied = 0
    for dst, src in zip(target.adversary.layers, source.adversary.layers):
        if dst.weight.value.shape == src.weight.value.shape:
            dst.weight.value[...] = src.weight.value
            dst.bias.value[...] = src.bias.value
            copied += 1
    return copied


def train_stack(spec: StackSpec, train: Dataset, cfg: TrainConfig,
                val: Dataset | None = None) -> tuple[TrainedStack, list[TrainLog]]:
    """Sequential level-by-level training; returns the encoder-only stack and
    one log per level.

    With ``cfg.freeze_previous`` (default) each level trains on codes
    precomputed from the already-trained, frozen earlier levels. With it off,
    earlier encoders keep updating inside later levels' main steps.
    """
    levels = build(spec, cfg.seed)
    logs: list[TrainLog] = []
    val_tuple = None
    for i, level in enumerate(levels):
        if cfg.adversary_warm_start and i > 0:
            _warm_start_adversary(level, levels[i - 1])
        if cfg.freeze_previous:
            z_prev = encode(levels, train.X, upto=i)
            if val is not None:
                val_tuple = (encode(levels, val.X, upto=i), val.y, val.s)
            log = _run_level(level, i, [], z_prev, train.y, train.s,
                             spec.alpha, spec.beta, spec.gamma, spec.root_mse,
                             cfg, val_tuple)
        else:
            if val is not None:
                val_tuple = (val.X, val.y, val.s)
            log = _run_level(level, i, levels[:i], train.X, train.y, train.s,
                             spec.alpha, spec.beta, spec.gamma, spec.root_mse,
                             cfg, val_tuple)
        logs.append(log)
    provenance = {
        "spec": spec.to_dict(),
        "spec_hash": spec_hash(spec),
        "seed": cfg.seed,
        "train_config": cfg.to_dict(),
        "dataset": train.summary(),
    }
    return TrainedStack.from_levels(levels, provenance), logs


def train_vanilla_lafr(spec: StackSpec, train: Dataset, cfg: TrainConfig,
                       val: Dataset | None = None) -> tuple[TrainedStack, list[TrainLog]]:
    """Single-level baseline: fairness pressure on the final code only."""
    if len(spec.levels) != 1:
        raise ValueError(
            f"the vanilla baseline is a single-level stack; got {len(spec.levels)} levels"
        )
    return train_stack(spec, train, cfg, val)
