import math

import numpy as np
import pytest

from meshres.autodiff import Tensor, no_grad
from meshres.errors import ConfigError, ParseError, ShapeError
from meshres.features import LabeledFeatures
from meshres.model import (AdamState, ModelConfig, TrainConfig, adam_step, forward,
                           geometric_affine, init_params, load_checkpoint, loss_ce, lr_schedule,
                           measure_inference, plan_levels, predict, save_checkpoint, softmax,
                           train)


def affine_oracle(f, c, alpha, beta, eps):
    d = f - c[:, None, :]
    flat = d.ravel()
    mean = sum(flat) / len(flat)
    var = sum((x - mean) ** 2 for x in flat) / len(flat)
    return alpha * d / (math.sqrt(var) + eps) + beta


def test_affine_zero_deviation():
    c = np.random.default_rng(0).normal(size=(3, 2))
    f = np.repeat(c[:, None, :], 4, axis=1)
    out = geometric_affine(f, c, np.ones(2), np.zeros(2)).data
    assert np.all(out == 0)
    out = geometric_affine(f, c, np.ones(2), np.full(2, 5.0)).data
    assert np.all(out == 5)


@pytest.mark.parametrize("seed", range(5))
def test_affine_matches_two_pass_oracle(seed):
    rng = np.random.default_rng(seed)
    f, c = rng.normal(size=(4, 3, 2)), rng.normal(size=(4, 2))
    alpha, beta = rng.normal(size=2), rng.normal(size=2)
    out = geometric_affine(f, c, alpha, beta, 1e-5).data
    assert np.abs(out - affine_oracle(f, c, alpha, beta, 1e-5)).max() <= 1e-12


def test_affine_self_normalizes():
    rng = np.random.default_rng(0)
    for scale in (1.0, 10.0, 1000.0):
        f, c = rng.normal(size=(6, 5, 4)) * scale, rng.normal(size=(6, 4)) * scale
        out = geometric_affine(f, c, np.ones(4), np.zeros(4), 1e-5).data
        d = f - c[:, None, :]
        sigma = d.std()
        # exact relation: std(out) = sigma / (sigma + eps)
        assert abs(out.std() - sigma / (sigma + 1e-5)) <= 1e-12
        if sigma >= 10:
            assert abs(out.std() - 1) <= 1e-6


@pytest.fixture(scope="module")
def tiny():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(64, 24))
    return LabeledFeatures(feats, rng.integers(0, 8, 64))


def test_forward_shape_and_softmax(tiny):
    cfg = ModelConfig()
    p = init_params(cfg, 0)
    logits = forward(tiny, p, cfg)
    assert logits.shape == (64, 8)
    assert np.abs(softmax(logits.data).sum(axis=1) - 1).max() <= 1e-9


def test_forward_rejects_bad_dims():
    cfg = ModelConfig()
    with pytest.raises(ShapeError):
        forward(np.zeros((64, 23)), init_params(cfg), cfg)


def test_plan_rejects_large_k():
    with pytest.raises(ShapeError):
        plan_levels(np.random.default_rng(0).normal(size=(20, 3)), ModelConfig())


def test_config_checks():
    with pytest.raises(ConfigError):
        ModelConfig(center_fractions=(0.25, 0.5))
    with pytest.raises(ConfigError):
        ModelConfig(stages=3)
    with pytest.raises(ConfigError):
        TrainConfig(lr_gamma=0.0)


def test_permutation_equivariance(tiny):
    cfg = ModelConfig()
    p = init_params(cfg, 2)
    rng = np.random.default_rng(5)
    perm = np.concatenate([[0], 1 + rng.permutation(63)])
    with no_grad():
        a = forward(tiny.features, p, cfg).data
        b = forward(tiny.features[perm], p, cfg).data
    assert np.abs(a[perm] - b).max() <= 1e-9


def test_deterministic_forward(tiny):
    cfg = ModelConfig()
    p = init_params(cfg, 0)
    assert np.array_equal(predict(p, tiny, cfg)[1], predict(p, tiny, cfg)[1])


def test_gradient_check_full_model():
    rng = np.random.default_rng(3)
    feats, labels = rng.normal(size=(32, 24)), rng.integers(0, 8, 32)
    cfg = ModelConfig()
    p = init_params(cfg, 3)
    lv = plan_levels(feats[:, 9:12], cfg)
    loss_ce(forward(feats, p, cfg, lv), labels).backward()
    names = sorted(p)
    for _ in range(30):
        name = names[rng.integers(len(names))]
        arr = p[name].data
        i = tuple(rng.integers(s) for s in arr.shape)
        old, h = arr[i], 1e-5
        with no_grad():
            arr[i] = old + h
            lp = float(loss_ce(forward(feats, p, cfg, lv), labels).data)
            arr[i] = old - h
            lm = float(loss_ce(forward(feats, p, cfg, lv), labels).data)
        arr[i] = old
        num, an = (lp - lm) / (2 * h), p[name].grad[i]
        assert abs(num - an) / max(abs(num), abs(an), 1e-6) < 1e-4, (name, i)


def test_adam_first_step():
    p = {"w": Tensor(np.array([0.5]), requires_grad=True)}
    adam_step(p, {"w": np.array([1.0])}, AdamState(), 0.001)
    assert abs(p["w"].data[0] - (0.5 - 0.001)) <= 1e-9


def test_adam_zero_grad_and_monotone():
    p = {"w": Tensor(np.array([0.5, -1.0]), requires_grad=True)}
    adam_step(p, {"w": np.zeros(2)}, AdamState(), 0.01)
    assert p["w"].data.tolist() == [0.5, -1.0]
    state, vals = AdamState(), []
    for _ in range(3):
        adam_step(p, {"w": np.ones(2)}, state, 0.01)
        vals.append(p["w"].data[0])
    assert vals[0] > vals[1] > vals[2]


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_schedule(0, cfg) == 0.001
    assert lr_schedule(119, cfg) == 0.001
    assert lr_schedule(120, cfg) == 0.0005
    assert lr_schedule(240, cfg) == 0.00025
    lrs = [lr_schedule(e, cfg) for e in range(400)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_frozen_run(tiny):
    cfg = ModelConfig()
    p0 = init_params(cfg, 0)
    params, hist = train([tiny], cfg, TrainConfig(epochs=1, lr0=0.0, batch_size=1))
    assert len(hist) == 1
    for k in p0:
        assert np.array_equal(params[k].data, p0[k].data)


def test_train_deterministic_and_learns(tiny):
    cfg = ModelConfig()
    tc = TrainConfig(epochs=6, lr0=0.01, batch_size=2, seed=4)
    data = [tiny, LabeledFeatures(tiny.features[::-1].copy(), tiny.labels[::-1].copy())]
    pa, ha = train(data, cfg, tc)
    pb, hb = train(data, cfg, tc)
    assert ha == hb
    assert all(np.array_equal(pa[k].data, pb[k].data) for k in pa)
    assert ha[-1]["train_loss"] < ha[0]["train_loss"]


def test_train_rejects_bad_dims(tiny):
    with pytest.raises(ConfigError):
        train([tiny], ModelConfig(input_dims=12), TrainConfig(epochs=1))


def test_predict_tie_and_confidence():
    from meshres.model import softmax as sm
    logits = np.zeros((1, 8))
    logits[0, 0] = 9
    assert sm(logits)[0, 0] > 0.99
    assert np.argmax(np.zeros(8)) == 0


def test_measure_inference(tiny):
    cfg = ModelConfig()
    t = measure_inference(init_params(cfg), tiny, cfg, repeats=3)
    assert len(t["timings"]) == 3 and t["min"] <= t["mean"] and t["cells"] == 64
    with pytest.raises(ValueError):
        measure_inference(init_params(cfg), tiny, cfg, repeats=2)


def test_checkpoint_round_trip(tmp_path, tiny):
    cfg = ModelConfig(channels=(16, 32), embed_dim=16)
    p = init_params(cfg, 9)
    save_checkpoint(tmp_path / "m.mrck", p, cfg)
    q, cfg2 = load_checkpoint(tmp_path / "m.mrck")
    assert cfg2 == cfg
    with no_grad():
        assert np.array_equal(forward(tiny, p, cfg).data, forward(tiny, q, cfg2).data)
    (tmp_path / "bad.mrck").write_bytes(b"MRCK" + bytes(5))
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "bad.mrck")
