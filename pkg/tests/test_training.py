import numpy as np
import pytest

from fairstack import autodiff as ad
from fairstack.autodiff import Var
from fairstack.data import make_synthetic
from fairstack.model import build, encode, level_loss, stacked_spec
from fairstack.nn import Adam
from fairstack.training import (
    LOG_COLUMNS,
    DivergenceError,
    TrainConfig,
    TrainLog,
    _warm_start_adversary,
    log_csv_string,
    train_level,
    train_stack,
    train_vanilla_lafr,
)


def _synthetic_split(n=256, seed=0, **kw):
    ds = make_synthetic(n=n, seed=seed, **kw)
    cut = int(n * 0.75)
    return ds.subset(range(cut)), ds.subset(range(cut, n))


# ---------------------------------------------------------------------------
# TrainConfig


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(adv_steps=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_adv=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(eopp_adv_label=2)


def test_config_adversary_lr_defaults_to_main():
    assert TrainConfig(lr=0.02).adversary_lr == 0.02
    assert TrainConfig(lr=0.02, lr_adv=0.5).adversary_lr == 0.5


# ---------------------------------------------------------------------------
# single-level behavior


def test_beta_zero_classifier_learns_adversary_unopposed():
    train, val = _synthetic_split()
    spec = stacked_spec(train.d, (4,), alpha=1.0, beta=0.0, gamma=1.0)
    cfg = TrainConfig(epochs=20, batch_size=32, seed=0)
    level = build(spec, cfg.seed)[0]
    log = train_level(level, train.X, train.y, train.s,
                      spec.alpha, spec.beta, spec.gamma, cfg,
                      val=(val.X, val.y, val.s))
    assert len(log.records) == 20
    first, last = log.records[0], log.records[-1]
    assert last.loss_class < first.loss_class
    # nothing opposes the adversary at beta=0: group structure survives in z
    # (feature 0 carries s by construction), so it ends clearly above chance
    assert last.adv_acc > 0.75
    # classifier fairness columns are populated
    assert np.isfinite(last.val_dp)


def test_fixed_seed_reproduces_identical_log():
    train, val = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (3,), beta=1.0)
    cfg = TrainConfig(epochs=3, batch_size=32, seed=5)
    outs = []
    for _ in range(2):
        level = build(spec, cfg.seed)[0]
        log = train_level(level, train.X, train.y, train.s,
                          spec.alpha, spec.beta, spec.gamma, cfg,
                          val=(val.X, val.y, val.s))
        outs.append(log_csv_string(log))
    assert outs[0] == outs[1]


def test_one_level_stack_equals_train_level_wiring():
    train, val = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (3,), beta=2.0)
    cfg = TrainConfig(epochs=3, batch_size=32, seed=9)

    stack, logs = train_stack(spec, train, cfg, val=val)

    level = build(spec, cfg.seed)[0]
    manual = train_level(level, train.X, train.y, train.s,
                         spec.alpha, spec.beta, spec.gamma, cfg,
                         level_index=0, val=(val.X, val.y, val.s))
    assert log_csv_string(logs) == log_csv_string(manual)
    for (w, b, _), layer in zip(stack.levels[0], level.encoder.layers):
        assert np.array_equal(w, layer.weight.value)
        assert np.array_equal(b, layer.bias.value)


# ---------------------------------------------------------------------------
# stack training


def test_frozen_levels_stay_bit_identical():
    train, _ = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (4, 2), beta=1.0)
    cfg = TrainConfig(epochs=2, batch_size=32, seed=3, freeze_previous=True)

    stack, logs = train_stack(spec, train, cfg)
    assert [log.level for log in logs] == [0, 1]

    # train only level 0, identically seeded: its weights must match the
    # full run's level-0 weights exactly (level-1 training never touched them)
    levels = build(spec, cfg.seed)
    train_level(levels[0], train.X, train.y, train.s,
                spec.alpha, spec.beta, spec.gamma, cfg, level_index=0)
    for (w, b, _), layer in zip(stack.levels[0], levels[0].encoder.layers):
        assert np.array_equal(w, layer.weight.value)
        assert np.array_equal(b, layer.bias.value)


def test_fine_tuning_updates_earlier_encoders():
    train, _ = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (4, 2), beta=1.0)
    frozen, _ = train_stack(spec, train, TrainConfig(
        epochs=2, batch_size=32, seed=3, freeze_previous=True))
    tuned, _ = train_stack(spec, train, TrainConfig(
        epochs=2, batch_size=32, seed=3, freeze_previous=False))
    w_frozen = frozen.levels[0][0][0]
    w_tuned = tuned.levels[0][0][0]
    assert w_frozen.shape == w_tuned.shape
    assert not np.array_equal(w_frozen, w_tuned)


def test_train_stack_deterministic_end_to_end():
    train, val = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (4, 2), beta=1.0)
    cfg = TrainConfig(epochs=2, batch_size=32, seed=11)
    a, logs_a = train_stack(spec, train, cfg, val=val)
    b, logs_b = train_stack(spec, train, cfg, val=val)
    for la, lb in zip(a.levels, b.levels):
        for (wa, ba, _), (wb, bb, _) in zip(la, lb):
            assert np.array_equal(wa, wb)
            assert np.array_equal(ba, bb)
    assert log_csv_string(logs_a) == log_csv_string(logs_b)


def test_train_stack_provenance():
    train, _ = _synthetic_split(n=64)
    spec = stacked_spec(train.d, (3,), beta=0.5)
    cfg = TrainConfig(epochs=1, batch_size=32, seed=2)
    stack, _ = train_stack(spec, train, cfg)
    assert stack.provenance["seed"] == 2
    assert stack.provenance["spec"]["beta"] == 0.5
    assert stack.provenance["train_config"]["epochs"] == 1
    assert stack.provenance["dataset"]["n"] == 48


def test_vanilla_wrapper_single_level_only():
    train, _ = _synthetic_split(n=64)
    cfg = TrainConfig(epochs=1, batch_size=32)
    spec1 = stacked_spec(train.d, (3,))
    stack, logs = train_vanilla_lafr(spec1, train, cfg)
    assert stack.n_levels == 1 and stack.out_dim == 3
    assert len(logs) == 1
    with pytest.raises(ValueError):
        train_vanilla_lafr(stacked_spec(train.d, (4, 2)), train, cfg)


# ---------------------------------------------------------------------------
# min-max sign conventions


def test_main_step_ascends_adversary_loss_on_average():
    # with alpha=gamma=0 the main objective is exactly -beta*L_adv, so a
    # small descent step on it must increase L_adv measured at the frozen
    # adversary; averaged over 50 batches to wash out curvature effects
    rng = np.random.default_rng(0)
    ds = make_synthetic(n=50 * 32, seed=1)
    level = build(stacked_spec(ds.d, (3,)), seed=0)[0]
    opt = Adam(level.main_params(), lr=1e-3)
    diffs = []
    for b in range(50):
        idx = np.arange(b * 32, (b + 1) * 32)
        xb, yb, sb = ds.X[idx], ds.y[idx], ds.s[idx]
        before = level_loss(level, xb, yb, sb, alpha=0.0, beta=1.0, gamma=0.0)
        ad.zero_grads(level.main_params() + level.adv_params())
        ad.backward(ad.scale(before.adv, -1.0))
        opt.step()
        after = level_loss(level, xb, yb, sb, alpha=0.0, beta=1.0, gamma=0.0)
        diffs.append(after.adv.item() - before.adv.item())
    assert np.mean(diffs) > 0.0


def test_adversary_step_descends_its_loss_on_average():
    ds = make_synthetic(n=50 * 32, seed=2)
    level = build(stacked_spec(ds.d, (3,)), seed=0)[0]
    opt = Adam(level.adv_params(), lr=1e-3)
    diffs = []
    for b in range(50):
        idx = np.arange(b * 32, (b + 1) * 32)
        xb, sb = ds.X[idx], ds.s[idx]
        z = level.encode_value(xb)
        target = sb.reshape(-1, 1).astype(float)

        def adv_loss():
            return ad.bce_loss(level.adversary.forward(Var(z)), target)

        before = adv_loss()
        ad.zero_grads(level.adv_params())
        ad.backward(before)
        opt.step()
        diffs.append(adv_loss().item() - before.item())
    assert np.mean(diffs) < 0.0


# ---------------------------------------------------------------------------
# eopp wiring


def test_eopp_rows_outside_subset_get_zero_gradient():
    ds = make_synthetic(n=64, seed=3)
    level = build(stacked_spec(ds.d, (3,), criterion="eopp"), seed=0)[0]
    z_prev = ad.parameter(ds.X)
    parts = level_loss(level, z_prev, ds.y, ds.s, alpha=1.0, beta=1.0,
                       gamma=1.0, eopp_label=0)
    ad.backward(parts.adv)
    outside = ds.y != 0
    assert outside.any() and (~outside).any()
    np.testing.assert_array_equal(z_prev.grad[outside],
                                  np.zeros_like(z_prev.grad[outside]))
    assert np.abs(z_prev.grad[~outside]).max() > 0


# ---------------------------------------------------------------------------
# divergence guard


def test_divergence_error_names_location():
    train, _ = _synthetic_split(n=64)
    spec = stacked_spec(train.d, (3,), alpha=1.0)
    # Adam steps are lr-sized regardless of gradient scale, so one enormous
    # step pushes the next forward pass past float range
    cfg = TrainConfig(epochs=1, batch_size=16, seed=0, lr=1e200)
    level = build(spec, cfg.seed)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            train_level(level, train.X, train.y, train.s,
                        spec.alpha, spec.beta, spec.gamma, cfg)
    msg = str(exc.value)
    assert "level 0" in msg and "epoch" in msg and "batch" in msg


# ---------------------------------------------------------------------------
# adversary warm start


def test_warm_start_copies_matching_layers_only():
    spec = stacked_spec(10, (4, 2), adv_hidden=6)
    levels = build(spec, seed=0)
    levels[0].adversary.layers[1].weight.value[...] = 7.0
    copied = _warm_start_adversary(levels[1], levels[0])
    # first layers differ in width (4 vs 2 inputs); hidden->output matches
    assert copied == 1
    assert np.all(levels[1].adversary.layers[1].weight.value == 7.0)
    assert levels[1].adversary.layers[0].weight.value.shape == (2, 6)


def test_warm_start_flag_changes_level2_adversary_path():
    train, _ = _synthetic_split(n=128)
    spec = stacked_spec(train.d, (4, 2), beta=1.0, adv_hidden=6)
    cold, logs_cold = train_stack(spec, train, TrainConfig(
        epochs=2, batch_size=32, seed=1, adversary_warm_start=False))
    warm, logs_warm = train_stack(spec, train, TrainConfig(
        epochs=2, batch_size=32, seed=1, adversary_warm_start=True))
    # level 0 is identical; the level-1 game differs through the adversary
    assert np.array_equal(cold.levels[0][0][0], warm.levels[0][0][0])
    assert logs_cold[1].records[-1].loss_adv != logs_warm[1].records[-1].loss_adv


# ---------------------------------------------------------------------------
# log serialization


def test_log_csv_layout():
    log = TrainLog(level=0)
    train, _ = _synthetic_split(n=64)
    spec = stacked_spec(train.d, (3,))
    cfg = TrainConfig(epochs=2, batch_size=32, seed=0)
    level = build(spec, cfg.seed)[0]
    log = train_level(level, train.X, train.y, train.s,
                      spec.alpha, spec.beta, spec.gamma, cfg)
    text = log_csv_string(log, comment="config_hash=abc seed=0")
    lines = text.strip().splitlines()
    assert lines[0] == "# config_hash=abc seed=0"
    assert lines[1] == ",".join(LOG_COLUMNS)
    assert len(lines) == 2 + cfg.epochs
    first = lines[2].split(",")
    assert first[0] == "0" and first[1] == "0"
    # no validation set -> gap columns are nan
    assert first[-1] == "nan"
