"""Feedforward reliability classifier written directly in numpy.

Leaky-ReLU hidden layers, a sigmoid output giving P(Reliable), weighted binary
cross-entropy, Adam with step decay and class-balanced minibatch sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Label

LEAK = 0.01
PROB_CLIP = 1e-7
HIDDEN = (256, 128, 64)


class SingleClassDataset(ValueError):
    pass


@dataclass
class NetworkParams:
    layer_dims: list[int]
    weights: list[np.ndarray]  # layer i maps dims[i] -> dims[i+1], shape (dims[i], dims[i+1])
    biases: list[np.ndarray]
    p_acc: float = 0.0
    threshold: float = 0.5
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    feature_schema: str = ""

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.p_acc,
            self.threshold,
            None if self.feature_mean is None else self.feature_mean.copy(),
            None if self.feature_std is None else self.feature_std.copy(),
            self.feature_schema,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def init_network(input_dim: int, seed: int, hidden=HIDDEN) -> NetworkParams:
    """He-scaled normal weights, zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [int(input_dim), *hidden, 1]
    weights = [rng.normal(0.0, math.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1])) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return NetworkParams(dims, weights, biases)


def _normalize(p: NetworkParams, x: np.ndarray) -> np.ndarray:
    if p.feature_mean is None:
        return x
    return (x - p.feature_mean) / p.feature_std


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _forward_cache(p: NetworkParams, x: np.ndarray):
    acts = [x]
    pre = []
    a = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w + b
        pre.append(z)
        a = _sigmoid(z) if i == last else np.where(z > 0, z, LEAK * z)
        acts.append(a)
    return pre, acts


def forward(p: NetworkParams, x) -> np.ndarray | float:
    """P(Reliable) for one feature vector (returns float) or a batch (returns array)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != p.input_dim:
        raise ValueError(f"expected {p.input_dim} features, got {xb.shape[1]}")
    _, acts = _forward_cache(p, _normalize(p, xb))
    out = acts[-1][:, 0]
    return float(out[0]) if single else out


def loss_and_grad(p: NetworkParams, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
    """Weighted-mean BCE over the batch and its gradient.

    Features are normalized with the stored statistics (no gradient flows into
    them). Returns ``(loss, (dW list, db list))``.
    """
    x = _normalize(p, np.atleast_2d(np.asarray(x, dtype=float)))
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    wsum = w.sum()
    pre, acts = _forward_cache(p, x)
    prob = acts[-1][:, 0]
    pc = np.clip(prob, PROB_CLIP, 1 - PROB_CLIP)
    loss = float(-np.sum(w * (y * np.log(pc) + (1 - y) * np.log(1 - pc))) / wsum)
    # d loss / d logit; zero where the clip is active
    active = (prob > PROB_CLIP) & (prob < 1 - PROB_CLIP)
    delta = (np.where(active, prob - y, 0.0) * w / wsum)[:, None]
    dws = [None] * len(p.weights)
    dbs = [None] * len(p.weights)
    for i in range(len(p.weights) - 1, -1, -1):
        dws[i] = acts[i].T @ delta
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i].T) * np.where(pre[i - 1] > 0, 1.0, LEAK)
    return loss, (dws, dbs)


def classify(p: NetworkParams, features) -> Label:
    return Label.RELIABLE if forward(p, features) >= p.threshold else Label.UNRELIABLE


def predict(p: NetworkParams, x: np.ndarray) -> np.ndarray:
    return (forward(p, np.atleast_2d(x)) >= p.threshold).astype(int)


def accuracy(p: NetworkParams, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    if len(y) == 0:
        return float("nan")
    hits = 0
    for s in range(0, len(y), chunk):
        hits += int(np.sum(predict(p, x[s : s + chunk]) == y[s : s + chunk]))
    return hits / len(y)


@dataclass
class TrainConfig:
    lr: float = 5e-4
    lr_decay: float = 0.8
    decay_every: int = 4
    batch: int = 32
    epochs: int = 10
    val_fraction: float = 0.2
    seed: int = 0
    class_weighting: bool = True
    standardize: bool = True
    hidden: tuple[int, ...] = HIDDEN
    feature_schema: str = ""

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.val_fraction < 0.5:
            raise ValueError("val_fraction must be in (0, 0.5)")


def sample_weights(y: np.ndarray, balanced: bool = True) -> np.ndarray:
    """Per-example draw probabilities, inversely proportional to class frequency."""
    y = np.asarray(y).astype(int)
    if not balanced:
        return np.full(len(y), 1.0 / len(y))
    counts = np.bincount(y, minlength=2).astype(float)
    w = 1.0 / counts[y]
    return w / w.sum()


def balanced_batches(y: np.ndarray, batch: int, n_batches: int, rng: np.random.Generator, balanced: bool = True):
    """Yield index arrays drawn with replacement by class-balancing weights."""
    probs = sample_weights(y, balanced)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    for _ in range(n_batches):
        yield np.searchsorted(cdf, rng.random(batch), side="right")


class Adam:
    def __init__(self, params: NetworkParams, b1=0.9, b2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m = [np.zeros_like(a) for a in params.weights + params.biases]
        self.v = [np.zeros_like(a) for a in params.weights + params.biases]
        self.t = 0

    def step(self, params: NetworkParams, grads, lr: float) -> None:
        self.t += 1
        dws, dbs = grads
        arrays = params.weights + params.biases
        for k, (a, g) in enumerate(zip(arrays, dws + dbs)):
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / (1 - self.b1**self.t)
            vh = self.v[k] / (1 - self.b2**self.t)
            a -= lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class Metrics:
    rows: list[dict] = field(default_factory=list)

    def csv(self) -> str:
        cols = ["epoch", "lr", "train_loss", "train_acc", "val_acc"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
        return "\n".join(lines) + "\n"


def split_indices(n: int, val_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, on_epoch=None) -> tuple[NetworkParams, Metrics]:
    """Train from scratch; ``p_acc`` in the result is accuracy on the held-out split."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int).reshape(-1)
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data must contain both labels")
    rng = np.random.default_rng(cfg.seed)
    tr, va = split_indices(len(y), cfg.val_fraction, rng)
    xtr, ytr, xva, yva = x[tr], y[tr], x[va], y[va]
    if len(np.unique(ytr)) < 2:
        raise SingleClassDataset("training split lost a class")

    params = init_network(x.shape[1], int(rng.integers(2**63)), cfg.hidden)
    params.feature_schema = cfg.feature_schema
    if cfg.standardize:
        mean = xtr.mean(axis=0)
        std = xtr.std(axis=0)
        params.feature_mean = mean
        params.feature_std = np.where(std > 1e-12, std, 1.0)
    opt = Adam(params)
    metrics = Metrics()
    n_batches = math.ceil(len(ytr) / cfg.batch)
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)
        losses = []
        for idx in balanced_batches(ytr, cfg.batch, n_batches, rng, cfg.class_weighting):
            loss, grads = loss_and_grad(params, xtr[idx], ytr[idx])
            opt.step(params, grads, lr)
            losses.append(loss)
        row = {
            "epoch": epoch + 1,
            "lr": lr,
            "train_loss": float(np.mean(losses)),
            "train_acc": accuracy(params, xtr, ytr),
            "val_acc": accuracy(params, xva, yva),
        }
        metrics.rows.append(row)
        if on_epoch is not None:
            on_epoch(row)
    params.p_acc = metrics.rows[-1]["val_acc"] if metrics.rows else accuracy(params, xva, yva)
    return params, metrics


# -- checkpoints -------------------------------------------------------------------


def params_to_dict(p: NetworkParams) -> dict:
    return {
        "layer_dims": list(p.layer_dims),
        "weights": [w.tolist() for w in p.weights],
        "biases": [b.tolist() for b in p.biases],
        "p_acc": p.p_acc,
        "threshold": p.threshold,
        "feature_schema": p.feature_schema,
        "feature_mean": None if p.feature_mean is None else p.feature_mean.tolist(),
        "feature_std": None if p.feature_std is None else p.feature_std.tolist(),
    }


def params_from_dict(d: dict) -> NetworkParams:
    dims = [int(v) for v in d["layer_dims"]]
    weights = [np.array(w, dtype=float).reshape(dims[i], dims[i + 1]) for i, w in enumerate(d["weights"])]
    biases = [np.array(b, dtype=float).reshape(dims[i + 1]) for i, b in enumerate(d["biases"])]
    for a in weights + biases:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite parameter in checkpoint")
    mean = d.get("feature_mean")
    std = d.get("feature_std")
    return NetworkParams(
        dims,
        weights,
        biases,
        float(d.get("p_acc", 0.0)),
        float(d.get("threshold", 0.5)),
        None if mean is None else np.array(mean, dtype=float),
        None if std is None else np.array(std, dtype=float),
        d.get("feature_schema", ""),
    )


def save_params(p: NetworkParams, path) -> None:
    with open(path, "w") as f:
        json.dump(params_to_dict(p), f)


def load_params(path) -> NetworkParams:
    with open(path) as f:
        return params_from_dict(json.load(f))
