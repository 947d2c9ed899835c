"""Stacked fair auto-encoder architecture.

Each level owns four networks: an encoder E_i mapping the previous code z_{i-1}
to a narrower code z_i, a decoder D_i mirroring the encoder, a classifier head
h_i predicting the label from z_i, and an adversary head f_i predicting the
sensitive attribute from z_i (plus the label column under the eo criterion).
Levels compose: z_0 is the raw input, z_i = E_i(z_{i-1}), with strictly
decreasing code widths. After training, only the encoders survive as a
:class:`TrainedStack`, which serializes to a small binary format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Var
from .nn import ACTIVATIONS, MLP, apply_activation

CRITERIA = ("dp", "eo", "eopp")

MAGIC = b"FSTK"
FORMAT_VERSION = 1


class SpecError(ValueError):
    """A stack specification violates its structural invariants."""


class ModelFormatError(ValueError):
    """A model file is corrupt, truncated, or from an unknown format version."""


@dataclass(frozen=True)
class LevelSpec:
    """Dims of one level's encoder: in_dim -> hidden... -> latent."""

    in_dim: int
    latent: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class StackSpec:
    levels: tuple[LevelSpec, ...]
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    criterion: str = "dp"
    adv_hidden: int = 20
    cls_hidden: int = 20
    root_mse: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        validate_spec(self)

    @property
    def in_dim(self) -> int:
        return self.levels[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.levels[-1].latent

    def to_dict(self) -> dict:
        return {
            "levels": [
                {"in_dim": l.in_dim, "latent": l.latent, "hidden": list(l.hidden)}
                for l in self.levels
            ],
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "criterion": self.criterion, "adv_hidden": self.adv_hidden,
            "cls_hidden": self.cls_hidden, "root_mse": self.root_mse,
        }


def spec_from_dict(d: dict) -> StackSpec:
    levels = tuple(
        LevelSpec(in_dim=l["in_dim"], latent=l["latent"], hidden=tuple(l.get("hidden", ())))
        for l in d["levels"]
    )
    return StackSpec(
        levels=levels,
        alpha=d.get("alpha", 1.0), beta=d.get("beta", 1.0), gamma=d.get("gamma", 1.0),
        criterion=d.get("criterion", "dp"),
        adv_hidden=d.get("adv_hidden", 20), cls_hidden=d.get("cls_hidden", 20),
        root_mse=d.get("root_mse", False),
    )


def spec_hash(spec: StackSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def validate_spec(spec: StackSpec) -> None:
    if not spec.levels:
        raise SpecError("a stack needs at least one level")
    for i, lv in enumerate(spec.levels):
        if lv.in_dim < 1 or lv.latent < 1 or any(h < 1 for h in lv.hidden):
            raise SpecError(f"level {i}: all dims must be >= 1, got {lv}")
        if lv.latent >= lv.in_dim:
            raise SpecError(
                f"level {i}: code width {lv.latent} must be strictly smaller "
                f"than its input width {lv.in_dim} (widths must decrease)"
            )
    for i in range(len(spec.levels) - 1):
        a, b = spec.levels[i], spec.levels[i + 1]
        if b.in_dim != a.latent:
            raise SpecError(
                f"dimension chain mismatch: level {i + 1} input width {b.in_dim} "
                f"!= level {i} code width {a.latent}"
            )
        if b.latent >= a.latent:
            raise SpecError(
                f"code widths must strictly decrease: level {i} has {a.latent}, "
                f"level {i + 1} has {b.latent}"
            )
    for name in ("alpha", "beta", "gamma"):
        if getattr(spec, name) < 0:
            raise SpecError(f"loss weight {name} must be >= 0, got {getattr(spec, name)}")
    if spec.criterion not in CRITERIA:
        raise SpecError(f"unknown criterion {spec.criterion!r}, expected one of {CRITERIA}")
    if spec.adv_hidden < 0 or spec.cls_hidden < 0:
        raise SpecError("adv_hidden and cls_hidden must be >= 0 (0 = linear head)")


def stacked_spec(in_dim: int, latents=(20, 8), **kwargs) -> StackSpec:
    """A stack of single-layer encoders: in_dim -> latents[0] -> latents[1] ..."""
    dims = [in_dim, *latents]
    levels = tuple(LevelSpec(in_dim=dims[i], latent=dims[i + 1]) for i in range(len(latents)))
    return StackSpec(levels=levels, **kwargs)


def vanilla_spec(in_dim: int, hidden=(20,), latent: int = 8, **kwargs) -> StackSpec:
    """The single-level baseline: one encoder with interior hidden layers and
    one adversary acting on the final code only."""
    return StackSpec(levels=(LevelSpec(in_dim=in_dim, latent=latent, hidden=tuple(hidden)),),
                     **kwargs)


# ---------------------------------------------------------------------------
# Levels


def _head_dims(in_dim: int, hidden: int) -> list[int]:
    return [in_dim, hidden, 1] if hidden > 0 else [in_dim, 1]


class Level:
    """One trainable level: encoder, mirrored decoder, classifier, adversary."""

    def __init__(self, spec: LevelSpec, criterion: str, adv_hidden: int,
                 cls_hidden: int, rng: np.random.Generator):
        enc_dims = [spec.in_dim, *spec.hidden, spec.latent]
        dec_dims = [spec.latent, *reversed(spec.hidden), spec.in_dim]
        self.spec = spec
        self.criterion = criterion
        self.encoder = MLP(enc_dims, rng)
        self.decoder = MLP(dec_dims, rng)
        self.classifier = MLP(_head_dims(spec.latent, cls_hidden), rng,
                              output_activation="sigmoid")
        adv_in = spec.latent + (1 if criterion == "eo" else 0)
        self.adversary = MLP(_head_dims(adv_in, adv_hidden), rng,
                             output_activation="sigmoid")
        self.trained = False

    @property
    def in_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent(self) -> int:
        return self.encoder.out_dim

    def encode_var(self, x: Var) -> Var:
        return self.encoder.forward(x)

    def encode_value(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.forward_value(x)

    def main_params(self) -> list[Var]:
        return self.encoder.params() + self.decoder.params() + self.classifier.params()

    def adv_params(self) -> list[Var]:
        return self.adversary.params()

    def all_params(self) -> list[Var]:
        return self.main_params() + self.adv_params()


def build(spec: StackSpec, seed: int) -> list[Level]:
    """Freshly initialized levels; deterministic per seed (one rng stream,
    networks created in a fixed order)."""
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    return [Level(lv, spec.criterion, spec.adv_hidden, spec.cls_hidden, rng)
            for lv in spec.levels]


def _check_width(x: np.ndarray, expected: int, what: str) -> None:
    if x.ndim != 2 or x.shape[1] != expected:
        raise DimensionError(
            f"{what}: expected input width {expected}, got shape {x.shape}"
        )


def encode(stack, X: np.ndarray, upto: int | None = None) -> np.ndarray:
    """z_k = E_k(...E_1(X)); ``upto=0`` returns X unchanged.

    ``stack`` is a list of built levels or a TrainedStack.
    """
    if isinstance(stack, TrainedStack):
        return stack.encode(X, upto)
    X = np.asarray(X, dtype=np.float64)
    if upto is None:
        upto = len(stack)
    if not 0 <= upto <= len(stack):
        raise ValueError(f"upto must be in [0, {len(stack)}], got {upto}")
    if stack:
        _check_width(X, stack[0].in_dim, "encode")
    z = X
    for level in stack[:upto]:
        z = level.encode_value(z)
    return z


# ---------------------------------------------------------------------------
# Per-level loss


@dataclass
class LevelLoss:
    """Combined level objective and its parts (each a graph node).

    ``adv`` is None when the criterion subset of the batch is empty; ``total``
    then omits the adversary term. ``total`` is the plain weighted sum
    alpha*rec + beta*adv + gamma*cls; the alternating trainer builds its own
    signed objectives from the parts.
    """

    total: Var
    rec: Var
    cls: Var
    adv: Var | None
    n_adv: int


def level_loss(level: Level, z_prev, y: np.ndarray, s: np.ndarray,
               alpha: float, beta: float, gamma: float,
               eopp_label: int = 0, root_mse: bool = False) -> LevelLoss:
    """Reconstruction + adversary + classifier losses at one level.

    ``z_prev`` is the level's input (matrix or graph node when fine-tuning
    through earlier levels); the reconstruction target is its detached value.
    Under eopp, the adversary term is restricted to rows with y == eopp_label;
    under eo, the label column is appended to the adversary input.
    """
    z_in = ad.as_var(z_prev)
    y = np.asarray(y).reshape(-1)
    s = np.asarray(s).reshape(-1)
    if y.shape[0] != z_in.value.shape[0] or s.shape[0] != z_in.value.shape[0]:
        raise DimensionError(
            f"level_loss: {z_in.value.shape[0]} rows vs y {y.shape[0]}, s {s.shape[0]}"
        )
    target = z_in.value.copy()
    z = level.encode_var(z_in)
    rec = ad.mse_loss(level.decoder.forward(z), target, root=root_mse)
    cls = ad.bce_loss(level.classifier.forward(z), y.reshape(-1, 1).astype(float))

    if level.criterion == "eopp":
        idx = np.flatnonzero(y == eopp_label)
    else:
        idx = np.arange(y.shape[0])
    if idx.size == 0:
        total = ad.add(ad.scale(rec, alpha), ad.scale(cls, gamma))
        return LevelLoss(total=total, rec=rec, cls=cls, adv=None, n_adv=0)

    z_adv = z if idx.size == y.shape[0] else ad.take_rows(z, idx)
    if level.criterion == "eo":
        z_adv = ad.concat_cols(z_adv, Var(y[idx].reshape(-1, 1).astype(float)))
    adv = ad.bce_loss(level.adversary.forward(z_adv), s[idx].reshape(-1, 1).astype(float))
    total = ad.add(ad.add(ad.scale(rec, alpha), ad.scale(adv, beta)), ad.scale(cls, gamma))
    return LevelLoss(total=total, rec=rec, cls=cls, adv=adv, n_adv=int(idx.size))


# ---------------------------------------------------------------------------
# Encoder-only artifact


@dataclass
class TrainedStack:
    """Encoder weights of a trained stack; nothing else survives training.

    ``levels`` holds, per level, a list of (weight, bias, activation-name)
    dense-layer triples. Supports numpy-only encoding and a binary file
    format (magic FSTK, version, dims, row-major float64 weights, then a
    provenance JSON blob).
    """

    in_dim: int
    levels: list[list[tuple[np.ndarray, np.ndarray, str]]]
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_levels(cls, levels: list[Level], provenance: dict | None = None) -> "TrainedStack":
        snap = [
            [(layer.weight.value.copy(), layer.bias.value.copy(), layer.activation)
             for layer in lv.encoder.layers]
            for lv in levels
        ]
        return cls(in_dim=levels[0].in_dim if levels else 0, levels=snap,
                   provenance=dict(provenance or {}))

    @classmethod
    def identity(cls, in_dim: int, provenance: dict | None = None) -> "TrainedStack":
        """A zero-level stack: encode(X) = X. Used for the unfair baseline."""
        return cls(in_dim=in_dim, levels=[], provenance=dict(provenance or {}))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def out_dim(self) -> int:
        if not self.levels:
            return self.in_dim
        return self.levels[-1][-1][0].shape[1]

    def encode(self, X: np.ndarray, upto: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        _check_width(X, self.in_dim, "encode")
        if upto is None:
            upto = len(self.levels)
        if not 0 <= upto <= len(self.levels):
            raise ValueError(f"upto must be in [0, {len(self.levels)}], got {upto}")
        z = X
        for layers in self.levels[:upto]:
            for W, b, act in layers:
                z = apply_activation(act, z @ W + b)
        return z

    # -- binary format ------------------------------------------------------

    def save(self, path) -> None:
        chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, self.in_dim),
                  struct.pack("<I", len(self.levels))]
        for layers in self.levels:
            chunks.append(struct.pack("<I", len(layers)))
            for W, b, act in layers:
                n_in, n_out = W.shape
                chunks.append(struct.pack("<IIB", n_in, n_out, ACTIVATIONS.index(act)))
                chunks.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
                chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        prov = json.dumps(self.provenance, sort_keys=True).encode()
        chunks.append(struct.pack("<I", len(prov)))
        chunks.append(prov)
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))

    @classmethod
    def load(cls, path) -> "TrainedStack":
        with open(path, "rb") as fh:
            data = fh.read()
        pos = 0

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(data):
                raise ModelFormatError(f"truncated model file: {path}")
            out = data[pos:pos + n]
            pos += n
            return out

        if take(4) != MAGIC:
            raise ModelFormatError(f"not a stack model file (bad magic): {path}")
        version, in_dim = struct.unpack("<II", take(8))
        if version != FORMAT_VERSION:
            raise ModelFormatError(
                f"model file has format version {version}; this build reads "
                f"version {FORMAT_VERSION}"
            )
        (n_levels,) = struct.unpack("<I", take(4))
        levels = []
        for _ in range(n_levels):
            (n_layers,) = struct.unpack("<I", take(4))
            layers = []
            for _ in range(n_layers):
                n_in, n_out, act_idx = struct.unpack("<IIB", take(9))
                if act_idx >= len(ACTIVATIONS):
                    raise ModelFormatError(f"unknown activation code {act_idx}")
                W = np.frombuffer(take(8 * n_in * n_out), dtype="<f8").reshape(n_in, n_out).copy()
                b = np.frombuffer(take(8 * n_out), dtype="<f8").reshape(1, n_out).copy()
                layers.append((W, b, ACTIVATIONS[act_idx]))
            levels.append(layers)
        (prov_len,) = struct.unpack("<I", take(4))
        try:
            provenance = json.loads(take(prov_len).decode())
        except ValueError as exc:
            raise ModelFormatError(f"corrupt provenance block: {exc}") from exc
        if pos != len(data):
            raise ModelFormatError(f"trailing bytes after model data: {path}")
        return cls(in_dim=in_dim, levels=levels, provenance=provenance)


def save(stack: TrainedStack, path) -> None:
    stack.save(path)


def load(path) -> TrainedStack:
    return TrainedStack.load(path)
