"""Experiment configuration: one JSON file drives every CLI command.

Keys (defaults in parentheses):

  dataset.id            "adult" | "german" | "synthetic"
  dataset.path          file or directory of the raw data; falls back to
                        $FAIRSTACK_DATA_DIR for adult/german
  dataset.include_sensitive (false)   keep the sensitive column in X
  dataset.n / n_noise / flip_y        synthetic-generator knobs
  dataset.subsample (null)            seeded row cap, for desk-scale runs
  dataset.subsample_seed (0)
  stack.levels          list of {latent, hidden: []}; input width is taken
                        from the dataset at build time
  stack.adv_hidden (20) / stack.cls_hidden (20)
  train.epochs (150) train.batch (64) train.lr (0.01) train.lr_adv (null)
  train.adv_steps (1) train.freeze_previous (true)
  train.adversary_warm_start (false) train.eopp_adv_label (0)
  loss.alpha (1.0) loss.beta (1.0) loss.gamma (1.0) loss.root_mse (false)
  criterion             "dp" | "eo" | "eopp"
  eo_mode               "sum" | "max"
  sweep.betas           list of beta values for cmd_sweep
  seeds                 non-empty list of run seeds
  out_dir ("runs")
  val_frac (0.2)        validation share of the train split
  cv_folds (5)
  probe.hidden (20) probe.epochs (100) probe.lr (0.01) probe.batch (64)
  forest.n_trees (100) forest.max_depth (null) forest.min_samples_split (2)

Unknown keys are rejected with their full dotted path, so typos fail loudly
instead of silently running defaults.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, load_adult, load_german, make_synthetic
from .downstream import ProbeSpec
from .forest import ForestSpec
from .model import CRITERIA, LevelSpec, StackSpec
from .training import TrainConfig

DATA_DIR_ENV = "FAIRSTACK_DATA_DIR"
DATASET_IDS = ("adult", "german", "synthetic")


class ConfigError(ValueError):
    """A config file is malformed; the message carries the offending key path."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_id: str
    dataset_path: str | None
    include_sensitive: bool
    synthetic_n: int
    synthetic_noise: int
    synthetic_flip_y: float
    subsample: int | None
    subsample_seed: int
    levels: tuple                      # ((hidden tuple, latent), ...)
    adv_hidden: int
    cls_hidden: int
    epochs: int
    batch: int
    lr: float
    lr_adv: float | None
    adv_steps: int
    freeze_previous: bool
    adversary_warm_start: bool
    eopp_adv_label: int
    alpha: float
    beta: float
    gamma: float
    root_mse: bool
    criterion: str
    eo_mode: str
    betas: tuple
    seeds: tuple
    out_dir: str
    val_frac: float
    cv_folds: int
    probe_hidden: int
    probe_epochs: int
    probe_lr: float
    probe_batch: int
    forest_trees: int
    forest_max_depth: int | None
    forest_min_split: int

    def to_dict(self) -> dict:
        """The fully resolved config in its file shape (defaults filled in)."""
        return {
            "dataset": {
                "id": self.dataset_id, "path": self.dataset_path,
                "include_sensitive": self.include_sensitive,
                "n": self.synthetic_n, "n_noise": self.synthetic_noise,
                "flip_y": self.synthetic_flip_y,
                "subsample": self.subsample, "subsample_seed": self.subsample_seed,
            },
            "stack": {
                "levels": [{"hidden": list(h), "latent": l} for h, l in self.levels],
                "adv_hidden": self.adv_hidden, "cls_hidden": self.cls_hidden,
            },
            "train": {
                "epochs": self.epochs, "batch": self.batch, "lr": self.lr,
                "lr_adv": self.lr_adv, "adv_steps": self.adv_steps,
                "freeze_previous": self.freeze_previous,
                "adversary_warm_start": self.adversary_warm_start,
                "eopp_adv_label": self.eopp_adv_label,
            },
            "loss": {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                     "root_mse": self.root_mse},
            "criterion": self.criterion,
            "eo_mode": self.eo_mode,
            "sweep": {"betas": list(self.betas)},
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
            "val_frac": self.val_frac,
            "cv_folds": self.cv_folds,
            "probe": {"hidden": self.probe_hidden, "epochs": self.probe_epochs,
                      "lr": self.probe_lr, "batch": self.probe_batch},
            "forest": {"n_trees": self.forest_trees, "max_depth": self.forest_max_depth,
                       "min_samples_split": self.forest_min_split},
        }


def config_hash(cfg: ExperimentConfig | dict) -> str:
    d = cfg.to_dict() if isinstance(cfg, ExperimentConfig) else cfg
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Validation helpers — every error names the dotted path of the bad key.


def _reject_unknown(d: dict, allowed, path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown config key{'s' if len(unknown) > 1 else ''} "
            f"{', '.join(repr(_join(path, k)) for k in unknown)}; "
            f"allowed here: {', '.join(sorted(allowed))}"
        )


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _section(d: dict, key: str, path: str = "") -> dict:
    sub = d.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"{_join(path, key)}: expected an object, got {type(sub).__name__}")
    return sub


def _typed(d: dict, key: str, path: str, kind, default, allow_none: bool = False):
    if key not in d:
        return default
    v = d[key]
    if v is None and allow_none:
        return None
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kind is int and isinstance(v, bool):
        raise ConfigError(f"{_join(path, key)}: expected int, got bool")
    if not isinstance(v, kind):
        raise ConfigError(
            f"{_join(path, key)}: expected {kind.__name__}, got {type(v).__name__} ({v!r})"
        )
    return v


def _positive(value, key: str, path: str, minimum=1):
    if value is not None and value < minimum:
        raise ConfigError(f"{_join(path, key)}: must be >= {minimum}, got {value}")
    return value


def _choice(value, key: str, path: str, allowed):
    if value not in allowed:
        raise ConfigError(
            f"{_join(path, key)}: unknown value {value!r}, allowed values: "
            f"{', '.join(allowed)}"
        )
    return value


def _parse_levels(stack: dict) -> tuple:
    raw = stack.get("levels")
    if raw is None:
        raise ConfigError("stack.levels: required (list of {latent, hidden})")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("stack.levels: expected a non-empty list")
    levels = []
    for i, item in enumerate(raw):
        path = f"stack.levels[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{path}: expected an object")
        _reject_unknown(item, {"latent", "hidden"}, path)
        latent = _typed(item, "latent", path, int, None)
        if latent is None:
            raise ConfigError(f"{path}.latent: required")
        _positive(latent, "latent", path)
        hidden = item.get("hidden", [])
        if not isinstance(hidden, list) or not all(
            isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in hidden
        ):
            raise ConfigError(f"{path}.hidden: expected a list of ints >= 1")
        levels.append((tuple(hidden), latent))
    for i in range(len(levels) - 1):
        if levels[i + 1][1] >= levels[i][1]:
            raise ConfigError(
                f"stack.levels[{i + 1}].latent: widths must strictly decrease "
                f"({levels[i][1]} then {levels[i + 1][1]})"
            )
    return tuple(levels)


def _int_list(d: dict, key: str, path: str, default, minimum=0) -> tuple:
    raw = d.get(key, default)
    if not isinstance(raw, list) or not all(
        isinstance(x, int) and not isinstance(x, bool) for x in raw
    ):
        raise ConfigError(f"{_join(path, key)}: expected a list of ints")
    if any(x < minimum for x in raw):
        raise ConfigError(f"{_join(path, key)}: entries must be >= {minimum}")
    return tuple(raw)


def _num_list(d: dict, key: str, path: str, default) -> tuple:
    raw = d.get(key, default)
    if not isinstance(raw, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw
    ):
        raise ConfigError(f"{_join(path, key)}: expected a list of numbers")
    if any(x < 0 for x in raw):
        raise ConfigError(f"{_join(path, key)}: entries must be >= 0")
    return tuple(float(x) for x in raw)


TOP_KEYS = {"dataset", "stack", "train", "loss", "criterion", "eo_mode", "sweep",
            "seeds", "out_dir", "val_frac", "cv_folds", "probe", "forest"}


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root: expected an object, got {type(raw).__name__}")
    _reject_unknown(raw, TOP_KEYS, "")

    ds = _section(raw, "dataset")
    _reject_unknown(ds, {"id", "path", "include_sensitive", "n", "n_noise",
                         "flip_y", "subsample", "subsample_seed"}, "dataset")
    dataset_id = _choice(_typed(ds, "id", "dataset", str, None), "id", "dataset", DATASET_IDS)
    dataset_path = _typed(ds, "path", "dataset", str, None, allow_none=True)

    stack = _section(raw, "stack")
    _reject_unknown(stack, {"levels", "adv_hidden", "cls_hidden"}, "stack")
    levels = _parse_levels(stack)

    train = _section(raw, "train")
    _reject_unknown(train, {"epochs", "batch", "lr", "lr_adv", "adv_steps",
                            "freeze_previous", "adversary_warm_start",
                            "eopp_adv_label"}, "train")

    loss = _section(raw, "loss")
    _reject_unknown(loss, {"alpha", "beta", "gamma", "root_mse"}, "loss")
    for key in ("alpha", "beta", "gamma"):
        if _typed(loss, key, "loss", float, 1.0) < 0:
            raise ConfigError(f"loss.{key}: must be >= 0")

    sweep = _section(raw, "sweep")
    _reject_unknown(sweep, {"betas"}, "sweep")

    probe = _section(raw, "probe")
    _reject_unknown(probe, {"hidden", "epochs", "lr", "batch"}, "probe")

    forest = _section(raw, "forest")
    _reject_unknown(forest, {"n_trees", "max_depth", "min_samples_split"}, "forest")

    seeds = _int_list(raw, "seeds", "", [0], minimum=0)
    if not seeds:
        raise ConfigError("seeds: must be non-empty")

    val_frac = _typed(raw, "val_frac", "", float, 0.2)
    if not 0.0 < val_frac < 0.5:
        raise ConfigError(f"val_frac: expected a fraction in (0, 0.5), got {val_frac}")

    cfg = ExperimentConfig(
        dataset_id=dataset_id,
        dataset_path=dataset_path,
        include_sensitive=_typed(ds, "include_sensitive", "dataset", bool, False),
        synthetic_n=_positive(_typed(ds, "n", "dataset", int, 2000), "n", "dataset", 4),
        synthetic_noise=_positive(_typed(ds, "n_noise", "dataset", int, 3), "n_noise", "dataset", 0),
        synthetic_flip_y=_typed(ds, "flip_y", "dataset", float, 0.0),
        subsample=_positive(_typed(ds, "subsample", "dataset", int, None, allow_none=True),
                            "subsample", "dataset", 10),
        subsample_seed=_positive(_typed(ds, "subsample_seed", "dataset", int, 0),
                                 "subsample_seed", "dataset", 0),
        levels=levels,
        adv_hidden=_positive(_typed(stack, "adv_hidden", "stack", int, 20), "adv_hidden", "stack", 0),
        cls_hidden=_positive(_typed(stack, "cls_hidden", "stack", int, 20), "cls_hidden", "stack", 0),
        epochs=_positive(_typed(train, "epochs", "train", int, 150), "epochs", "train"),
        batch=_positive(_typed(train, "batch", "train", int, 64), "batch", "train"),
        lr=_positive(_typed(train, "lr", "train", float, 0.01), "lr", "train", 1e-12),
        lr_adv=_positive(_typed(train, "lr_adv", "train", float, None, allow_none=True),
                         "lr_adv", "train", 1e-12),
        adv_steps=_positive(_typed(train, "adv_steps", "train", int, 1), "adv_steps", "train"),
        freeze_previous=_typed(train, "freeze_previous", "train", bool, True),
        adversary_warm_start=_typed(train, "adversary_warm_start", "train", bool, False),
        eopp_adv_label=_choice(_typed(train, "eopp_adv_label", "train", int, 0),
                               "eopp_adv_label", "train", (0, 1)),
        alpha=_typed(loss, "alpha", "loss", float, 1.0),
        beta=_typed(loss, "beta", "loss", float, 1.0),
        gamma=_typed(loss, "gamma", "loss", float, 1.0),
        root_mse=_typed(loss, "root_mse", "loss", bool, False),
        criterion=_choice(_typed(raw, "criterion", "", str, "dp"), "criterion", "", CRITERIA),
        eo_mode=_choice(_typed(raw, "eo_mode", "", str, "sum"), "eo_mode", "", ("sum", "max")),
        betas=_num_list(sweep, "betas", "sweep", [1.0, 2.0, 3.0, 5.0, 15.0]),
        seeds=seeds,
        out_dir=_typed(raw, "out_dir", "", str, "runs"),
        val_frac=val_frac,
        cv_folds=_positive(_typed(raw, "cv_folds", "", int, 5), "cv_folds", "", 2),
        probe_hidden=_positive(_typed(probe, "hidden", "probe", int, 20), "hidden", "probe", 0),
        probe_epochs=_positive(_typed(probe, "epochs", "probe", int, 100), "epochs", "probe"),
        probe_lr=_positive(_typed(probe, "lr", "probe", float, 0.01), "lr", "probe", 1e-12),
        probe_batch=_positive(_typed(probe, "batch", "probe", int, 64), "batch", "probe"),
        forest_trees=_positive(_typed(forest, "n_trees", "forest", int, 100), "n_trees", "forest"),
        forest_max_depth=_positive(_typed(forest, "max_depth", "forest", int, None,
                                          allow_none=True), "max_depth", "forest"),
        forest_min_split=_positive(_typed(forest, "min_samples_split", "forest", int, 2),
                                   "min_samples_split", "forest", 2),
    )
    _check_dataset_path(cfg, base_dir)
    return cfg


def load_config(path, seed: int | None = None, beta: float | None = None,
                criterion: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config file, applying CLI overrides
    (--seed replaces the seed list, --beta pins both loss.beta and the sweep
    list, --criterion replaces the criterion)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {seed}")
        raw["seeds"] = [seed]
    if beta is not None:
        if beta < 0:
            raise ConfigError(f"--beta must be >= 0, got {beta}")
        raw.setdefault("loss", {})["beta"] = beta
        raw.setdefault("sweep", {})["betas"] = [beta]
    if criterion is not None:
        raw["criterion"] = criterion
    return parse_config(raw, base_dir=p.parent)


def _check_dataset_path(cfg: ExperimentConfig, base_dir: Path | None) -> None:
    if cfg.dataset_id == "synthetic":
        return
    if resolve_data_path(cfg, base_dir) is None:
        raise ConfigError(
            f"dataset.path: no path configured for dataset {cfg.dataset_id!r} and "
            f"${DATA_DIR_ENV} is not set (or the file does not exist)"
        )


def resolve_data_path(cfg: ExperimentConfig, base_dir: Path | None = None) -> Path | None:
    """dataset.path if it exists (relative paths resolve against the config
    file's directory, then the cwd), else $FAIRSTACK_DATA_DIR."""
    if cfg.dataset_path:
        p = Path(cfg.dataset_path)
        candidates = [p] if p.is_absolute() else [
            (base_dir / p) if base_dir else p, p
        ]
        for c in candidates:
            if c.exists():
                return c
        return None
    env = os.environ.get(DATA_DIR_ENV)
    if env and Path(env).exists():
        return Path(env)
    return None


def load_dataset(cfg: ExperimentConfig, base_dir: Path | None = None) -> Dataset:
    if cfg.dataset_id == "synthetic":
        ds = make_synthetic(n=cfg.synthetic_n, seed=cfg.subsample_seed,
                            n_noise=cfg.synthetic_noise, flip_y=cfg.synthetic_flip_y)
    else:
        path = resolve_data_path(cfg, base_dir)
        if path is None:
            raise ConfigError(f"dataset.path: cannot locate data for {cfg.dataset_id!r}")
        loader = load_adult if cfg.dataset_id == "adult" else load_german
        ds = loader(path, include_sensitive=cfg.include_sensitive)
    if cfg.subsample is not None and cfg.subsample < ds.n:
        idx = np.sort(np.random.default_rng(cfg.subsample_seed)
                      .choice(ds.n, size=cfg.subsample, replace=False))
        sub = ds.subset(idx)
        sub.meta["subsampled_from"] = ds.n
        return sub
    return ds


# ---------------------------------------------------------------------------
# Bridges from config values to component specs


def stack_spec_for(cfg: ExperimentConfig, in_dim: int, variant: str = "stacked",
                   beta: float | None = None) -> StackSpec:
    """The architecture implied by the config for a given input width.

    ``stacked`` gives one level per configured latent; ``vanilla`` collapses
    the same chain into a single level (every intermediate width becomes an
    interior hidden layer) so only the final code carries fairness pressure.
    """
    beta = cfg.beta if beta is None else float(beta)
    common = dict(alpha=cfg.alpha, beta=beta, gamma=cfg.gamma, criterion=cfg.criterion,
                  adv_hidden=cfg.adv_hidden, cls_hidden=cfg.cls_hidden,
                  root_mse=cfg.root_mse)
    if variant == "stacked":
        specs = []
        prev = in_dim
        for hidden, latent in cfg.levels:
            specs.append(LevelSpec(in_dim=prev, latent=latent, hidden=hidden))
            prev = latent
        return StackSpec(levels=tuple(specs), **common)
    if variant == "vanilla":
        chain: list[int] = []
        for hidden, latent in cfg.levels[:-1]:
            chain.extend(hidden)
            chain.append(latent)
        chain.extend(cfg.levels[-1][0])
        return StackSpec(
            levels=(LevelSpec(in_dim=in_dim, latent=cfg.levels[-1][1], hidden=tuple(chain)),),
            **common,
        )
    raise ValueError(f"unknown variant {variant!r}, expected 'stacked' or 'vanilla'")


def train_config_for(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch, lr=cfg.lr, lr_adv=cfg.lr_adv,
        adv_steps=cfg.adv_steps, seed=seed, freeze_previous=cfg.freeze_previous,
        adversary_warm_start=cfg.adversary_warm_start,
        eopp_adv_label=cfg.eopp_adv_label,
    )


def probe_spec_for(cfg: ExperimentConfig, seed: int) -> ProbeSpec:
    return ProbeSpec(hidden=cfg.probe_hidden, epochs=cfg.probe_epochs,
                     lr=cfg.probe_lr, batch_size=cfg.probe_batch, seed=seed)


def forest_spec_for(cfg: ExperimentConfig, seed: int) -> ForestSpec:
    return ForestSpec(n_trees=cfg.forest_trees, max_depth=cfg.forest_max_depth,
                      min_samples_split=cfg.forest_min_split, seed=seed)
