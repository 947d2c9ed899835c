"""Tabular dataset ingestion: UCI Adult Income and German Credit, plus a
synthetic generator with a planted sensitive attribute.

Loaders produce a :class:`Dataset` holding the feature matrix X (categoricals
one-hot encoded, binary categoricals as a single 0/1 column), binary labels y,
and the binary sensitive attribute s (gender). Continuous columns are kept
raw at load time; :func:`standardize` z-scores them with statistics from a
training index set only, so splits control their own normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """A raw file could not be turned into a valid (X, y, s) dataset."""


@dataclass
class Dataset:
    X: np.ndarray                     # (n, d) float64
    y: np.ndarray                     # (n,) int 0/1
    s: np.ndarray                     # (n,) int 0/1
    feature_names: list[str]
    continuous: list[str]             # names of z-scorable columns
    norm_stats: dict[str, tuple[float, float]] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def summary(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "y_balance": float(self.y.mean()),
            "s_balance": float(self.s.mean()),
            "n_raw": self.meta.get("n_raw", self.n),
            "n_dropped": self.meta.get("n_dropped", 0),
            "source": self.meta.get("source", "synthetic"),
            "standardized": self.norm_stats is not None,
        }

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(
            X=self.X[idx].copy(), y=self.y[idx].copy(), s=self.s[idx].copy(),
            feature_names=list(self.feature_names), continuous=list(self.continuous),
            norm_stats=None if self.norm_stats is None else dict(self.norm_stats),
            meta=dict(self.meta),
        )


def _check_binary_column(values: np.ndarray, what: str) -> None:
    if len(np.unique(values)) < 2:
        raise DatasetError(f"{what} column degenerate: only one class present")


# ---------------------------------------------------------------------------
# Column encoding

@dataclass
class _Column:
    name: str
    kind: str  # "continuous" | "categorical"


def _encode_columns(rows: list[list[str]], columns: list[_Column]):
    """Encode string columns into a float matrix.

    Continuous columns parse as floats. Categorical columns with two values
    become one 0/1 indicator; with k > 2 values, k one-hot indicators
    (categories in sorted order); single-valued columns are dropped.
    """
    n = len(rows)
    blocks: list[np.ndarray] = []
    names: list[str] = []
    continuous: list[str] = []
    encoding: dict[str, str] = {}
    for j, col in enumerate(columns):
        raw = [r[j] for r in rows]
        if col.kind == "continuous":
            try:
                vals = np.array([float(v) for v in raw])
            except ValueError as exc:
                raise DatasetError(f"column {col.name!r}: non-numeric value ({exc})") from exc
            blocks.append(vals.reshape(-1, 1))
            names.append(col.name)
            continuous.append(col.name)
            encoding[col.name] = "continuous"
            continue
        cats = sorted(set(raw))
        if len(cats) == 1:
            encoding[col.name] = "constant-dropped"
            continue
        if len(cats) == 2:
            vals = np.array([1.0 if v == cats[1] else 0.0 for v in raw])
            blocks.append(vals.reshape(-1, 1))
            names.append(f"{col.name}={cats[1]}")
            encoding[col.name] = "binary"
            continue
        index = {c: i for i, c in enumerate(cats)}
        block = np.zeros((n, len(cats)))
        for i, v in enumerate(raw):
            block[i, index[v]] = 1.0
        blocks.append(block)
        names.extend(f"{col.name}={c}" for c in cats)
        encoding[col.name] = "onehot"
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return X, names, continuous, encoding


# ---------------------------------------------------------------------------
# UCI Adult Income

ADULT_COLUMNS = [
    _Column("age", "continuous"),
    _Column("workclass", "categorical"),
    _Column("fnlwgt", "continuous"),
    _Column("education", "categorical"),
    _Column("education-num", "continuous"),
    _Column("marital-status", "categorical"),
    _Column("occupation", "categorical"),
    _Column("relationship", "categorical"),
    _Column("race", "categorical"),
    _Column("sex", "categorical"),
    _Column("capital-gain", "continuous"),
    _Column("capital-loss", "continuous"),
    _Column("hours-per-week", "continuous"),
    _Column("native-country", "categorical"),
]
_ADULT_SEX_IDX = 9


def _adult_files(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        files = [p / "adult.data", p / "adult.test"]
        files = [f for f in files if f.exists()]
        if not files:
            raise DatasetError(f"no adult.data/adult.test found under {p}")
        return files
    if not p.exists():
        raise DatasetError(f"cannot read {p}")
    return [p]


def load_adult(path, include_sensitive: bool = False) -> Dataset:
    """UCI Adult Income: y=1 for income >50K, s=1 for sex Male.

    ``path`` is one CSV file or a directory holding adult.data/adult.test
    (both files are concatenated; re-splitting is the caller's job). Rows
    containing a '?' field are dropped and counted in meta.
    """
    rows: list[list[str]] = []
    n_raw = 0
    n_dropped = 0
    for f in _adult_files(path):
        for lineno, line in enumerate(f.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [x.strip() for x in line.split(",")]
            if len(fields) != 15:
                raise DatasetError(f"{f}:{lineno}: expected 15 fields, got {len(fields)}")
            n_raw += 1
            if "?" in fields:
                n_dropped += 1
                continue
            rows.append(fields)
    if not rows:
        raise DatasetError(f"no usable rows in {path}")

    y = np.empty(len(rows), dtype=np.int64)
    s = np.empty(len(rows), dtype=np.int64)
    for i, r in enumerate(rows):
        label = r[14].rstrip(".")
        if label == ">50K":
            y[i] = 1
        elif label == "<=50K":
            y[i] = 0
        else:
            raise DatasetError(f"unknown income label {r[14]!r} in row {i}")
        sex = r[_ADULT_SEX_IDX]
        if sex == "Male":
            s[i] = 1
        elif sex == "Female":
            s[i] = 0
        else:
            raise DatasetError(f"unknown sex value {sex!r} in row {i}")
    _check_binary_column(y, "label (sensitive/label column degenerate)")
    _check_binary_column(s, "sensitive (sensitive/label column degenerate)")

    keep = [c for i, c in enumerate(ADULT_COLUMNS) if i != _ADULT_SEX_IDX]
    data = [[r[i] for i in range(14) if i != _ADULT_SEX_IDX] for r in rows]
    X, names, continuous, encoding = _encode_columns(data, keep)
    if include_sensitive:
        X = np.hstack([X, s.reshape(-1, 1).astype(float)])
        names.append("sex=Male")
    return Dataset(
        X=X, y=y, s=s, feature_names=names, continuous=continuous,
        meta={"source": str(path), "n_raw": n_raw, "n_dropped": n_dropped,
              "encoding": encoding, "include_sensitive": include_sensitive},
    )


# ---------------------------------------------------------------------------
# UCI German Credit

GERMAN_COLUMNS = [
    _Column("checking_status", "categorical"),
    _Column("duration", "continuous"),
    _Column("credit_history", "categorical"),
    _Column("purpose", "categorical"),
    _Column("credit_amount", "continuous"),
    _Column("savings", "categorical"),
    _Column("employment", "categorical"),
    _Column("installment_rate", "continuous"),
    _Column("personal_status", "categorical"),
    _Column("other_debtors", "categorical"),
    _Column("residence_since", "continuous"),
    _Column("property", "categorical"),
    _Column("age", "continuous"),
    _Column("installment_plans", "categorical"),
    _Column("housing", "categorical"),
    _Column("existing_credits", "continuous"),
    _Column("job", "categorical"),
    _Column("num_dependents", "continuous"),
    _Column("telephone", "categorical"),
    _Column("foreign_worker", "categorical"),
]
_GERMAN_STATUS_IDX = 8
_GERMAN_MALE = {"A91", "A93", "A94"}
_GERMAN_FEMALE = {"A92", "A95"}


def load_german(path, include_sensitive: bool = False) -> Dataset:
    """UCI German Credit: y=1 for class 1 (good), s from the
    personal-status/sex codes (A91/A93/A94 male=1, A92/A95 female=0)."""
    p = Path(path)
    if p.is_dir():
        p = p / "german.data"
    if not p.exists():
        raise DatasetError(f"cannot read {p}")
    rows: list[list[str]] = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 21:
            raise DatasetError(f"{p}:{lineno}: expected 21 fields, got {len(fields)}")
        rows.append(fields)
    if not rows:
        raise DatasetError(f"no usable rows in {p}")

    y = np.empty(len(rows), dtype=np.int64)
    s = np.empty(len(rows), dtype=np.int64)
    for i, r in enumerate(rows):
        if r[20] == "1":
            y[i] = 1
        elif r[20] == "2":
            y[i] = 0
        else:
            raise DatasetError(f"unknown credit class {r[20]!r} in row {i}")
        code = r[_GERMAN_STATUS_IDX]
        if code in _GERMAN_MALE:
            s[i] = 1
        elif code in _GERMAN_FEMALE:
            s[i] = 0
        else:
            raise DatasetError(f"unknown personal-status code {code!r} in row {i}")
    _check_binary_column(y, "label (sensitive/label column degenerate)")
    _check_binary_column(s, "sensitive (sensitive/label column degenerate)")

    keep = [c for i, c in enumerate(GERMAN_COLUMNS) if i != _GERMAN_STATUS_IDX]
    data = [[r[i] for i in range(20) if i != _GERMAN_STATUS_IDX] for r in rows]
    X, names, continuous, encoding = _encode_columns(data, keep)
    if include_sensitive:
        X = np.hstack([X, s.reshape(-1, 1).astype(float)])
        names.append("sex=male")
    return Dataset(
        X=X, y=y, s=s, feature_names=names, continuous=continuous,
        meta={"source": str(path), "n_raw": len(rows), "n_dropped": 0,
              "encoding": encoding, "include_sensitive": include_sensitive},
    )


# ---------------------------------------------------------------------------
# Synthetic data with a planted sensitive attribute

def make_synthetic(n: int = 2000, seed: int = 0, n_noise: int = 3,
                   flip_y: float = 0.0) -> Dataset:
    """Toy dataset: s is a deterministic function of feature 0 (exactly
    balanced groups), y depends only on features 1 and 2.

    Feature 0 carries s with a margin, so an adversary on the raw features
    recovers s almost perfectly; y is independent of feature 0 by
    construction. ``flip_y`` adds label noise.
    """
    if n < 4:
        raise DatasetError("synthetic dataset needs n >= 4")
    rng = np.random.default_rng(seed)
    s = np.zeros(n, dtype=np.int64)
    s[: n // 2] = 1
    rng.shuffle(s)
    x0 = (np.abs(rng.normal(size=n)) + 0.2) * np.where(s == 1, 1.0, -1.0)
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    y = (x1 + x2 > 0).astype(np.int64)
    if flip_y > 0:
        flip = rng.random(n) < flip_y
        y = np.where(flip, 1 - y, y)
    cols = [x0, x1, x2] + [rng.normal(size=n) for _ in range(n_noise)]
    X = np.column_stack(cols)
    names = [f"f{i}" for i in range(X.shape[1])]
    return Dataset(
        X=X, y=y, s=s, feature_names=names, continuous=list(names),
        meta={"source": "synthetic", "seed": seed, "n_raw": n, "n_dropped": 0},
    )


# ---------------------------------------------------------------------------
# Standardization

def standardize(ds: Dataset, train_idx) -> Dataset:
    """Z-score continuous columns using statistics of ``train_idx`` rows only.

    The same transform is applied to every row; validation/test means are in
    general not zero. Constant columns (train std ~ 0) are left unscaled.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    if train_idx.size == 0:
        raise DatasetError("standardize needs a non-empty training index set")
    X = ds.X.copy()
    stats: dict[str, tuple[float, float]] = {}
    col_of = {name: i for i, name in enumerate(ds.feature_names)}
    for name in ds.continuous:
        j = col_of[name]
        mean = float(X[train_idx, j].mean())
        std = float(X[train_idx, j].std())
        if std < 1e-12:
            std = 1.0
        X[:, j] = (X[:, j] - mean) / std
        stats[name] = (mean, std)
    return Dataset(
        X=X, y=ds.y.copy(), s=ds.s.copy(),
        feature_names=list(ds.feature_names), continuous=list(ds.continuous),
        norm_stats=stats, meta=dict(ds.meta),
    )


# ---------------------------------------------------------------------------
# Splits and batches

@dataclass
class SplitPlan:
    """Either a train/val/test partition or a k-fold partition of [0, n)."""

    seed: int
    train: np.ndarray | None = None
    val: np.ndarray | None = None
    test: np.ndarray | None = None
    folds: list[np.ndarray] | None = None


def _require_n(dataset_or_n) -> int:
    if isinstance(dataset_or_n, Dataset):
        return dataset_or_n.n
    return int(dataset_or_n)


def train_val_test_split(dataset_or_n, seed: int, val_frac: float = 0.2,
                         test_frac: float = 0.0) -> SplitPlan:
    n = _require_n(dataset_or_n)
    if not 0 <= val_frac + test_frac < 1:
        raise ValueError(f"val_frac={val_frac} + test_frac={test_frac} must be in [0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_frac))
    n_val = int(round(n * val_frac))
    return SplitPlan(
        seed=seed,
        test=np.sort(perm[:n_test]),
        val=np.sort(perm[n_test:n_test + n_val]),
        train=np.sort(perm[n_test + n_val:]),
    )


def make_folds(dataset_or_n, k: int, seed: int) -> SplitPlan:
    """Seeded shuffle partitioned into k near-equal folds covering [0, n)."""
    n = _require_n(dataset_or_n)
    if k < 2 or k > n:
        raise ValueError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(np.sort(perm[start:start + size]))
        start += size
    return SplitPlan(seed=seed, folds=folds)


def fold_train_indices(plan: SplitPlan, fold: int) -> np.ndarray:
    rest = [f for i, f in enumerate(plan.folds) if i != fold]
    return np.sort(np.concatenate(rest))


def batches(n, batch_size: int, seed, epoch: int) -> list[np.ndarray]:
    """Seeded per-epoch shuffle of [0, n) chopped into batches; the final
    partial batch is included.

    ``seed`` may be an int or a sequence of ints (e.g. (run_seed, level));
    the epoch is mixed into the stream so every epoch reshuffles.
    """
    n = _require_n(n)
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    entropy = [int(x) for x in (seed if isinstance(seed, (list, tuple)) else [seed])]
    if any(x < 0 for x in entropy) or epoch < 0:
        raise ValueError("seed and epoch must be non-negative")
    perm = np.random.default_rng(entropy + [int(epoch)]).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def write_summary(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(ds.summary(), indent=2, sort_keys=True) + "\n")
