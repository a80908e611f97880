"""PointMLP-style per-cell segmentation network, trained with Adam.

Encoder stage: farthest-point centers -> kNN groups -> geometric affine
normalization -> residual MLP blocks per neighbor -> max-pool over the
group -> residual MLP blocks per center. The decoder propagates features
back to every cell with inverse-squared-distance weights over the three
nearest coarse points, concatenating the skip features of each level.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, cross_entropy, global_std, log_softmax, no_grad
from .errors import ConfigError, ParseError, ShapeError
from .features import FEATURE_DIMS, LabeledFeatures
from .spatial import fps, knn

log = logging.getLogger(__name__)

NUM_CLASSES = 8
IDW_EPS = 1e-8


@dataclass
class ModelConfig:
    stages: int = 2
    channels: tuple[int, ...] = (32, 64)
    embed_dim: int = 32
    k_neighbors: int = 16
    center_fractions: tuple[float, ...] = (0.5, 0.25)
    pre_blocks: int = 2
    pos_blocks: int = 2
    num_classes: int = NUM_CLASSES
    input_dims: int = FEATURE_DIMS
    affine_eps: float = 1e-5

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.center_fractions = tuple(float(f) for f in self.center_fractions)
        if len(self.channels) != self.stages or len(self.center_fractions) != self.stages:
            raise ConfigError("channels and center_fractions need one entry per stage")
        if any(b >= a for a, b in zip(self.center_fractions, self.center_fractions[1:])):
            raise ConfigError("center fractions must decrease across stages")


@dataclass
class TrainConfig:
    epochs: int = 200
    lr0: float = 0.001
    lr_step: int = 120
    lr_gamma: float = 0.5
    batch_size: int = 16
    seed: int = 0
    # stop after this many optimizer steps (None: run all epochs)
    max_iterations: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr_step < 1 or self.lr0 < 0:
            raise ConfigError("epochs, batch_size and lr_step must be positive")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise ConfigError("lr_gamma must lie in (0, 1]")


# -- geometry primitives --------------------------------------------------

def geometric_affine(group_feats, center_feats, alpha, beta, eps: float = 1e-5) -> Tensor:
    """alpha * (f_ij - f_i) / (sigma + eps) + beta.

    ``sigma`` is one scalar: the standard deviation of every
    ``f_ij - f_i`` entry across all groups and channels.
    """
    g = group_feats if isinstance(group_feats, Tensor) else Tensor(group_feats)
    c = center_feats if isinstance(center_feats, Tensor) else Tensor(center_feats)
    diff = g - c.reshape(c.shape[0], 1, c.shape[1])
    sigma = global_std(diff)
    return alpha * (diff / (sigma + eps)) + beta


@dataclass
class _Level:
    centers: np.ndarray        # indices into the previous level
    groups: np.ndarray         # (m, k) indices into the previous level
    interp_idx: np.ndarray     # (n_prev, 3) indices into this level
    interp_w: np.ndarray       # (n_prev, 3) normalized weights


def plan_levels(positions: np.ndarray, config: ModelConfig) -> list[_Level]:
    """Sampling/grouping/interpolation indices; depends only on positions."""
    n_total = len(positions)
    pts = positions
    levels = []
    for s in range(config.stages):
        m = max(1, int(round(config.center_fractions[s] * n_total)))
        if m > len(pts):
            raise ShapeError(f"stage {s}: {m} centers from {len(pts)} points")
        if config.k_neighbors > len(pts):
            raise ShapeError(
                f"stage {s}: k={config.k_neighbors} exceeds {len(pts)} grouped points")
        centers = fps(pts, m)
        new_pts = pts[centers]
        groups = knn(pts, new_pts, config.k_neighbors)
        k3 = min(3, m)
        idx, dist = knn(new_pts, pts, k3, return_dist=True)
        w = 1.0 / (dist ** 2 + IDW_EPS)
        w /= w.sum(axis=1, keepdims=True)
        levels.append(_Level(centers, groups, idx, w))
        pts = new_pts
    return levels


# -- parameters -----------------------------------------------------------

def _linear_init(rng, fan_in, fan_out, gain=2.0):
    # He-normal; keeps activations O(1) through the unnormalized stack
    return rng.normal(0.0, math.sqrt(gain / fan_in), (fan_in, fan_out)), np.zeros(fan_out)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def linear(name, fi, fo, gain=2.0):
        params[name + ".w"], params[name + ".b"] = _linear_init(rng, fi, fo, gain)

    def res_block(name, c):
        linear(name + ".fc1", c, c)
        linear(name + ".fc2", c, c, gain=0.5)

    linear("embed", config.input_dims, config.embed_dim)
    widths = [config.embed_dim, *config.channels]
    for s in range(config.stages):
        cin, cout = widths[s], widths[s + 1]
        params[f"stage{s}.alpha"] = np.ones(cin + 3)
        params[f"stage{s}.beta"] = np.zeros(cin + 3)
        linear(f"stage{s}.transfer", 2 * (cin + 3), cout)
        for b in range(config.pre_blocks):
            res_block(f"stage{s}.pre{b}", cout)
        for b in range(config.pos_blocks):
            res_block(f"stage{s}.pos{b}", cout)
    for s in reversed(range(config.stages)):
        linear(f"decode{s}.fuse", widths[s + 1] + widths[s], widths[s])
        res_block(f"decode{s}.res", widths[s])
    linear("head.fc1", config.embed_dim, config.embed_dim)
    linear("head.fc2", config.embed_dim, config.num_classes, gain=0.1)
    return {k: Tensor(v, requires_grad=True) for k, v in params.items()}


def _lin(x: Tensor, p, name) -> Tensor:
    return x @ p[name + ".w"] + p[name + ".b"]


def _res(x: Tensor, p, name) -> Tensor:
    h = _lin(_lin(x, p, name + ".fc1").gelu(), p, name + ".fc2")
    return (h + x).gelu()


def forward(features, params: dict[str, Tensor], config: ModelConfig,
            levels: list[_Level] | None = None) -> Tensor:
    """Logits (N, num_classes) for one surface's feature matrix."""
    feats = features.features if isinstance(features, LabeledFeatures) else np.asarray(features)
    if feats.ndim != 2 or feats.shape[1] != config.input_dims:
        raise ShapeError(f"expected N x {config.input_dims} features, got {feats.shape}")
    positions = feats[:, 9:12]
    if levels is None:
        levels = plan_levels(positions, config)

    x = _lin(Tensor(feats), params, "embed").gelu()
    skips, pts = [x], positions
    for s, lv in enumerate(levels):
        grouped_pts = pts[lv.groups]
        gf = concat([x.take(lv.groups), Tensor(grouped_pts)], axis=-1)
        cf = concat([x.take(lv.centers), Tensor(pts[lv.centers])], axis=-1)
        m, k, c = gf.shape
        normed = geometric_affine(gf, cf, params[f"stage{s}.alpha"],
                                  params[f"stage{s}.beta"], config.affine_eps)
        anchor = (cf.reshape(m, 1, c) + Tensor(np.zeros((1, k, 1))))
        h = _lin(concat([normed, anchor], axis=-1), params, f"stage{s}.transfer").gelu()
        for b in range(config.pre_blocks):
            h = _res(h, params, f"stage{s}.pre{b}")
        h = h.max(axis=1)
        for b in range(config.pos_blocks):
            h = _res(h, params, f"stage{s}.pos{b}")
        x, pts = h, pts[lv.centers]
        skips.append(x)

    for s in reversed(range(config.stages)):
        lv = levels[s]
        coarse = skips[s + 1]
        interp = (coarse.take(lv.interp_idx) * Tensor(lv.interp_w[:, :, None])).sum(axis=1)
        h = _lin(concat([interp, skips[s]], axis=-1), params, f"decode{s}.fuse").gelu()
        skips[s] = _res(h, params, f"decode{s}.res")
    h = _lin(skips[0], params, "head.fc1").gelu()
    return _lin(h, params, "head.fc2")


def loss_ce(logits: Tensor, labels) -> Tensor:
    return cross_entropy(logits, labels)


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(Tensor(logits)))


# -- optimization ------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected Adam update of ``params``."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name, np.zeros_like(p.data))
        v = state.v.get(name, np.zeros_like(p.data))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    return config.lr0 * config.lr_gamma ** (epoch // config.lr_step)


def _zero_grads(params):
    for p in params.values():
        p.grad = None


def _dataset_loss(params, data, plans, config) -> float:
    with no_grad():
        return float(np.mean([loss_ce(forward(d, params, config, pl), d.labels).data
                              for d, pl in zip(data, plans)]))


def train(dataset: list[LabeledFeatures], model_config: ModelConfig,
          train_config: TrainConfig, val: list[LabeledFeatures] | None = None,
          params: dict[str, Tensor] | None = None):
    """Mini-batch Adam over surfaces; returns (best params, history).

    The returned parameters are those with the lowest validation loss
    (training loss when no validation set is given).
    """
    if not dataset:
        raise ConfigError("empty training set")
    dims = {d.features.shape[1] for d in dataset + list(val or [])}
    if dims != {model_config.input_dims}:
        raise ConfigError(f"feature dims {sorted(dims)} != {model_config.input_dims}")
    if params is None:
        params = init_params(model_config, train_config.seed)
    plans = [plan_levels(d.positions, model_config) for d in dataset]
    val_plans = [plan_levels(d.positions, model_config) for d in (val or [])]
    rng = np.random.default_rng(train_config.seed)
    state = AdamState()
    history = []
    best, best_params = math.inf, copy.deepcopy({k: v.data for k, v in params.items()})
    steps = 0
    for epoch in range(train_config.epochs):
        lr = lr_schedule(epoch, train_config)
        order = rng.permutation(len(dataset))
        batch_losses = []
        for lo in range(0, len(order), train_config.batch_size):
            if train_config.max_iterations is not None and steps >= train_config.max_iterations:
                break
            batch = order[lo:lo + train_config.batch_size]
            _zero_grads(params)
            loss = 0.0
            # one graph at a time; gradients accumulate to the batch mean
            for i in batch:
                li = loss_ce(forward(dataset[i], params, model_config, plans[i]), dataset[i].labels)
                li = li * (1.0 / len(batch))
                li.backward()
                loss += float(li.data)
                del li
            adam_step(params, {k: p.grad for k, p in params.items() if p.grad is not None},
                      state, lr)
            steps += 1
            batch_losses.append(loss)
        if not batch_losses:
            break
        train_loss = float(np.mean(batch_losses))
        val_loss = _dataset_loss(params, val, val_plans, model_config) if val else None
        # score the post-update parameters on the data they are selected by
        score = val_loss if val else _dataset_loss(params, dataset, plans, model_config)
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                        "val_loss": val_loss, "steps": steps})
        log.info("epoch %d lr %.2e train %.4f val %s", epoch, lr, train_loss,
                 f"{val_loss:.4f}" if val_loss is not None else "-")
        if score < best:
            best = score
            best_params = {k: v.data.copy() for k, v in params.items()}
    return {k: Tensor(v, requires_grad=True) for k, v in best_params.items()}, history


def predict(params: dict[str, Tensor], features, config: ModelConfig):
    """(labels, probabilities); argmax ties go to the smaller class id."""
    with no_grad():
        logits = forward(features, params, config).data
    probs = softmax(logits)
    return np.argmax(logits, axis=1), probs


def measure_inference(params, features, config: ModelConfig, repeats: int = 3) -> dict:
    """Wall-clock forward timings in ms after one excluded warm-up run."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    feats = features.features if isinstance(features, LabeledFeatures) else np.asarray(features)
    with no_grad():
        forward(feats, params, config)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            forward(feats, params, config)
            times.append((time.perf_counter() - t0) * 1e3)
    return {"cells": len(feats), "timings": times, "mean": float(np.mean(times)),
            "p50": float(np.median(times)), "min": float(np.min(times))}


# -- checkpoints ------------------------------------------------------

MRCK_MAGIC = b"MRCK"
MRCK_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor], config: ModelConfig) -> None:
    cfg = json.dumps(asdict(config), sort_keys=True).encode()
    out = [MRCK_MAGIC, struct.pack("<II", MRCK_VERSION, len(cfg)), cfg,
           struct.pack("<I", len(params))]
    for name in sorted(params):
        data = np.ascontiguousarray(params[name].data, dtype="<f8")
        raw = name.encode()
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}Q", *data.shape))
        out.append(data.tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> tuple[dict[str, Tensor], ModelConfig]:
    data = Path(path).read_bytes()
    if data[:4] != MRCK_MAGIC:
        raise ParseError(f"{path}: not a checkpoint")
    try:
        version, clen = struct.unpack_from("<II", data, 4)
        if version != MRCK_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        config = ModelConfig(**json.loads(data[pos:pos + clen]))
        pos += clen
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            name = data[pos + 4:pos + 4 + nlen].decode()
            pos += 4 + nlen
            (ndim,) = struct.unpack_from("<I", data, pos)
            shape = struct.unpack_from(f"<{ndim}Q", data, pos + 4)
            pos += 4 + 8 * ndim
            size = int(np.prod(shape))
            arr = np.frombuffer(data, "<f8", size, pos).reshape(shape).astype(np.float64)
            pos += 8 * size
            params[name] = Tensor(arr, requires_grad=True)
    except struct.error as exc:
        raise ParseError(f"{path}: truncated checkpoint") from exc
    return params, config
