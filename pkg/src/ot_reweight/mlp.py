"""Two-block MLP classifier with manual backpropagation.

The extractor (theta1) maps inputs D -> hidden (tanh) -> feature dim E
(tanh); the classifier (theta2) is a single linear layer E -> K. Training is
plain SGD with momentum and weight decay, all gradients hand-derived, so
parameter trajectories are bitwise deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrainHyper", "ModelParams", "forward", "weighted_ce_loss",
           "loss_gradients", "train_step", "lookahead_params",
           "save_params", "load_params"]

EXTRACTOR_KEYS = ("W1", "b1", "W2", "b2")
CLASSIFIER_KEYS = ("W3", "b3")
PROB_FLOOR = 1e-12


@dataclass
class TrainHyper:
    alpha: float = 0.1
    beta: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs_stage1: int = 20
    epochs_stage2: int = 20
    freeze_extractor_stage2: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


@dataclass
class ModelParams:
    """Named tensors plus matching momentum buffers."""
    tensors: dict = field(default_factory=dict)
    velocity: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.tensors["W1"].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.tensors["W2"].shape[1]

    @property
    def num_classes(self) -> int:
        return self.tensors["W3"].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            velocity={k: v.copy() for k, v in self.velocity.items()},
        )


def init_params(input_dim: int, num_classes: int, rng: np.random.Generator,
                hidden: int = 64, feature_dim: int = 32) -> ModelParams:
    """Uniform(-s, s) init with s = 1/sqrt(fan_in)."""
    def layer(n_in, n_out):
        s = 1.0 / np.sqrt(n_in)
        return rng.uniform(-s, s, size=(n_in, n_out)), np.zeros(n_out)

    W1, b1 = layer(input_dim, hidden)
    W2, b2 = layer(hidden, feature_dim)
    W3, b3 = layer(feature_dim, num_classes)
    tensors = {"W1": W1, "b1": b1, "W2": W2, "b2": b2, "W3": W3, "b3": b3}
    velocity = {k: np.zeros_like(v) for k, v in tensors.items()}
    return ModelParams(tensors=tensors, velocity=velocity)


def _check_finite(x: np.ndarray, where: str):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite activation at {where}")


def extract_features(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Extractor output z = f1(x; theta1)."""
    x = np.asarray(x, dtype=float)
    t = params.tensors
    if x.shape[1] != t["W1"].shape[0]:
        raise ValueError(
            f"input dim {x.shape[1]} != model input dim {t['W1'].shape[0]}"
        )
    h = np.tanh(x @ t["W1"] + t["b1"])
    _check_finite(h, "extractor layer 1")
    z = np.tanh(h @ t["W2"] + t["b2"])
    _check_finite(z, "extractor layer 2")
    return z


def forward(params: ModelParams, x: np.ndarray):
    """Returns (z, logits, probs)."""
    z = extract_features(params, x)
    t = params.tensors
    logits = z @ t["W3"] + t["b3"]
    _check_finite(logits, "classifier")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return z, logits, probs


def weighted_ce_loss(probs: np.ndarray, labels: np.ndarray, w: np.ndarray) -> float:
    """(1/|B|) sum_i w_i * (-log probs_i[label_i]); probs floored at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    w = np.asarray(w, dtype=float)
    n = probs.shape[0]
    if w.shape != (n,) or labels.shape != (n,):
        raise ValueError("weights/labels length must match the batch")
    p = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    return float((w * -np.log(p)).sum() / n)


def loss_gradients(params: ModelParams, x, labels, w):
    """Backprop of weighted_ce_loss; returns (grads dict, loss)."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    w = np.asarray(w, dtype=float)
    t = params.tensors
    n = x.shape[0]

    h = np.tanh(x @ t["W1"] + t["b1"])
    z = np.tanh(h @ t["W2"] + t["b2"])
    logits = z @ t["W3"] + t["b3"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    loss = weighted_ce_loss(probs, labels, w)

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits *= (w / n)[:, None]

    grads = {
        "W3": z.T @ dlogits,
        "b3": dlogits.sum(axis=0),
    }
    dz = dlogits @ t["W3"].T
    dz_pre = dz * (1.0 - z * z)
    grads["W2"] = h.T @ dz_pre
    grads["b2"] = dz_pre.sum(axis=0)
    dh = dz_pre @ t["W2"].T
    dh_pre = dh * (1.0 - h * h)
    grads["W1"] = x.T @ dh_pre
    grads["b1"] = dh_pre.sum(axis=0)
    return grads, loss


def train_step(params: ModelParams, x, labels, w, hyper: TrainHyper,
               freeze_extractor: bool = False) -> float:
    """One SGD+momentum+weight-decay step in place; returns the loss."""
    grads, loss = loss_gradients(params, x, labels, w)
    for k, g in grads.items():
        if freeze_extractor and k in EXTRACTOR_KEYS:
            continue
        v = params.velocity[k]
        v *= hyper.momentum
        v += g + hyper.weight_decay * params.tensors[k]
        params.tensors[k] -= hyper.alpha * v
        _check_finite(params.tensors[k], k)
    return loss


def lookahead_params(params: ModelParams, x, labels, w, alpha: float) -> ModelParams:
    """Plain gradient lookahead theta - alpha * grad; momentum buffers untouched."""
    grads, _ = loss_gradients(params, x, labels, w)
    out = params.copy()
    for k, g in grads.items():
        out.tensors[k] -= alpha * g
    return out


def save_params(params: ModelParams, path):
    arrays = {f"t_{k}": v for k, v in params.tensors.items()}
    arrays.update({f"v_{k}": v for k, v in params.velocity.items()})
    np.savez(path, **arrays)


def load_params(path) -> ModelParams:
    with np.load(path) as data:
        tensors = {k[2:]: data[k] for k in data.files if k.startswith("t_")}
        velocity = {k[2:]: data[k] for k in data.files if k.startswith("v_")}
    return ModelParams(tensors=tensors, velocity=velocity)
