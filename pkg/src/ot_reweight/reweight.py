"""Example re-weighting by transport-gradient descent.

Weights live as one global logit per training example; the weight vector of a
mini-batch is the softmax of the batch slice, so it stays on the simplex no
matter how many gradient steps are taken. Each update builds the cost matrix
between the batch and the meta atoms, solves entropic transport, and pulls
the dual-potential gradient back through the softmax.

An amortized alternative maps batch features to weights through a small
attention-style net whose parameters are updated by the same transport
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import costs, mlp
from .data import Dataset
from .ot_core import SinkhornConfig, sinkhorn_plan

__all__ = ["CostConfig", "WeightState", "MetaDistribution",
           "build_meta_distribution", "batch_weights", "weight_logit_grad",
           "weight_update_direct", "WeightNetParams", "weight_net_forward",
           "weight_net_update", "stage2_step"]


@dataclass(frozen=True)
class CostConfig:
    kind: str = "combined"          # label | feature | combined
    label_coeff: float = 1.0

    def __post_init__(self):
        if self.kind not in costs.COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.label_coeff < 0:
            raise ValueError("label_coeff must be >= 0")


@dataclass
class WeightState:
    logits: np.ndarray              # one entry per training example
    beta: float = 1e-3              # weight step size
    mode: str = "maintained"        # maintained | scratch

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if self.mode not in ("maintained", "scratch"):
            raise ValueError(f"unknown weight mode {self.mode!r}")

    @classmethod
    def zeros(cls, n: int, beta: float = 1e-3, mode: str = "maintained"):
        return cls(np.zeros(n), beta, mode)

    def global_weights(self) -> np.ndarray:
        """Softmax over all logits (diagnostics / weight dumps)."""
        return _softmax(self.logits)


@dataclass
class MetaDistribution:
    """Meta atoms kept in raw input space; features go through the current
    extractor at use time so the cost tracks the model."""
    atom_features: np.ndarray       # (n_atoms, D) for whole; (K, D) prototypes
    atom_labels: np.ndarray
    num_classes: int
    mode: str = "whole"             # whole | prototype | random_sample
    sample_k: int = 0

    def realize(self, rng: np.random.Generator | None = None):
        """Atoms, labels and mass for one iteration."""
        if self.mode == "random_sample":
            if rng is None:
                raise ValueError("random_sample mode needs an rng")
            pick = np.sort(rng.choice(self.atom_labels.size, size=self.sample_k,
                                      replace=False))
            x, y = self.atom_features[pick], self.atom_labels[pick]
        else:
            x, y = self.atom_features, self.atom_labels
        mass = np.full(y.size, 1.0 / y.size)
        return x, y, mass


def build_meta_distribution(meta: Dataset, mode: str = "whole",
                            sample_k: int = 0,
                            rng: np.random.Generator | None = None
                            ) -> MetaDistribution:
    counts = meta.class_counts
    if counts.min() < 1:
        raise ValueError(f"meta set has no examples of class {int(np.argmin(counts))}")
    if np.any(counts != counts[0]):
        bad = int(np.argmax(counts != counts[0]))
        raise ValueError(
            f"meta set unbalanced: class {bad} has {counts[bad]} examples, "
            f"expected {counts[0]}"
        )
    if mode == "whole":
        return MetaDistribution(meta.features.copy(), meta.labels.copy(),
                                meta.num_classes, "whole")
    if mode in ("prototype", "random_sample"):
        K = meta.num_classes
        protos = np.stack([meta.features[meta.labels == k].mean(axis=0)
                           for k in range(K)])
        labels = np.arange(K, dtype=np.int64)
        if mode == "prototype":
            return MetaDistribution(protos, labels, K, "prototype")
        if not 1 <= sample_k <= K:
            raise ValueError("sample_k must be in [1, num_classes]")
        return MetaDistribution(protos, labels, K, "random_sample", sample_k)
    raise ValueError(f"unknown meta mode {mode!r}")


def _softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max())
    return e / e.sum()


def batch_weights(state: WeightState, batch_indices) -> np.ndarray:
    idx = np.asarray(batch_indices)
    if idx.size < 2 or np.unique(idx).size != idx.size:
        raise ValueError("need >= 2 distinct batch indices")
    return _softmax(state.logits[idx])


def _batch_cost(batch_x, batch_y, model_params, Q: MetaDistribution,
                cost_cfg: CostConfig, rng=None):
    xq, yq, mass = Q.realize(rng)
    if cost_cfg.kind == "label":
        z_tr = z_me = None
    else:
        z_tr = mlp.extract_features(model_params, batch_x)
        z_me = mlp.extract_features(model_params, xq)
    C = costs.build_cost(cost_cfg.kind, z_tr, batch_y, z_me, yq,
                         Q.num_classes, cost_cfg.label_coeff)
    return C, mass


def weight_logit_grad(w: np.ndarray, C: np.ndarray, mass: np.ndarray,
                      cfg: SinkhornConfig, init_g=None):
    """Transport-cost gradient pulled back through the batch softmax.

    Returns (grad wrt logits, transport plan). The softmax Jacobian makes the
    result invariant to the dual potential's additive gauge.
    """
    plan = sinkhorn_plan(C, w, mass, cfg, init_g=init_g)
    f = plan.dual_row
    g = w * (f - w @ f)
    return g, plan


def weight_update_direct(state: WeightState, batch_indices, batch_x, batch_y,
                         model_params, Q: MetaDistribution,
                         cfg: SinkhornConfig, cost_cfg: CostConfig,
                         steps: int = 1, rng=None) -> float:
    """`steps` gradient steps on the batch logits; returns the final OT cost."""
    idx = np.asarray(batch_indices)
    if state.mode == "scratch":
        state.logits[idx] = 0.0
    C, mass = _batch_cost(batch_x, batch_y, model_params, Q, cost_cfg, rng)
    ot_cost = np.nan
    warm_g = None
    for _ in range(steps):
        w = batch_weights(state, idx)
        g, plan = weight_logit_grad(w, C, mass, cfg, init_g=warm_g)
        warm_g = plan.dual_col
        ot_cost = plan.ot_cost
        state.logits[idx] -= state.beta * g
    return float(ot_cost)


# ---------------------------------------------------------------------------
# amortized weight net


@dataclass
class WeightNetParams:
    variant: str = "attention"      # attention | self_attention
    tensors: dict = field(default_factory=dict)
    reduction: str = "row_mean"     # self_attention only: row_mean | diagonal

    @classmethod
    def init(cls, feature_dim: int, rng: np.random.Generator,
             variant: str = "attention", attn_dim: int = 64,
             latent_dim: int = 128, reduction: str = "row_mean"):
        if variant == "attention":
            s = 1.0 / np.sqrt(feature_dim)
            tensors = {
                "w_att": rng.uniform(-1.0 / np.sqrt(attn_dim),
                                     1.0 / np.sqrt(attn_dim), size=attn_dim),
                "W_vz": rng.uniform(-s, s, size=(attn_dim, feature_dim)),
            }
        elif variant == "self_attention":
            s = 1.0 / np.sqrt(feature_dim)
            tensors = {
                "W1": rng.uniform(-s, s, size=(latent_dim, feature_dim)),
                "W2": rng.uniform(-s, s, size=(latent_dim, feature_dim)),
            }
        else:
            raise ValueError(f"unknown weight net variant {variant!r}")
        if reduction not in ("row_mean", "diagonal"):
            raise ValueError(f"unknown reduction {reduction!r}")
        return cls(variant, tensors, reduction)


def _row_softmax(M: np.ndarray) -> np.ndarray:
    e = np.exp(M - M.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def weight_net_forward(Z: np.ndarray, params: WeightNetParams) -> np.ndarray:
    """Batch features -> weight vector on the batch simplex."""
    Z = np.asarray(Z, dtype=float)
    t = params.tensors
    if params.variant == "attention":
        if Z.shape[1] != t["W_vz"].shape[1]:
            raise ValueError("feature dim mismatch")
        s = np.tanh(Z @ t["W_vz"].T) @ t["w_att"]
        return _softmax(s)
    if Z.shape[1] != t["W1"].shape[1]:
        raise ValueError("feature dim mismatch")
    d_l = t["W1"].shape[0]
    P = Z @ t["W1"].T                     # (B, d_l)
    R = Z @ t["W2"].T
    M = (P @ R.T) / np.sqrt(d_l)          # (B, B) scores
    if params.reduction == "diagonal":
        return _softmax(np.diag(M))
    A = _row_softmax(M)
    return A.mean(axis=0)


def _weight_net_backward(Z, params: WeightNetParams, dw: np.ndarray) -> dict:
    """Gradients of sum(dw * w(Z)) w.r.t. the net tensors."""
    t = params.tensors
    if params.variant == "attention":
        T = np.tanh(Z @ t["W_vz"].T)      # (B, A)
        s = T @ t["w_att"]
        w = _softmax(s)
        ds = w * (dw - w @ dw)
        g_watt = T.T @ ds
        g_Wvz = ((1.0 - T * T) * np.outer(ds, t["w_att"])).T @ Z
        return {"w_att": g_watt, "W_vz": g_Wvz}

    d_l = t["W1"].shape[0]
    scale = 1.0 / np.sqrt(d_l)
    P = Z @ t["W1"].T
    R = Z @ t["W2"].T
    M = (P @ R.T) * scale
    if params.reduction == "diagonal":
        s = np.diag(M)
        w = _softmax(s)
        ds = w * (dw - w @ dw)
        dP = (ds[:, None] * R) * scale
        dR = (ds[:, None] * P) * scale
    else:
        A = _row_softmax(M)
        B = Z.shape[0]
        dA = np.tile(dw / B, (B, 1))
        dM = A * (dA - (dA * A).sum(axis=1, keepdims=True))
        dP = (dM @ R) * scale
        dR = (dM.T @ P) * scale
    return {"W1": dP.T @ Z, "W2": dR.T @ Z}


def weight_net_update(params: WeightNetParams, batch_x, batch_y, model_params,
                      Q: MetaDistribution, cfg: SinkhornConfig,
                      cost_cfg: CostConfig, beta: float, rng=None) -> float:
    """One transport-gradient step on the net parameters; returns OT cost."""
    Z = mlp.extract_features(model_params, batch_x)
    C, mass = _batch_cost(batch_x, batch_y, model_params, Q, cost_cfg, rng)
    w = weight_net_forward(Z, params)
    plan = sinkhorn_plan(C, w, mass, cfg)
    grads = _weight_net_backward(Z, params, plan.dual_row)
    for k, g in grads.items():
        params.tensors[k] -= beta * g
    return plan.ot_cost


# ---------------------------------------------------------------------------
# stage-2 alternating step


def stage2_step(model_params, weights, batch_indices, batch_x, batch_y,
                Q: MetaDistribution, hyper: mlp.TrainHyper,
                cfg: SinkhornConfig, cost_cfg: CostConfig,
                inner_steps: int = 1, rng=None) -> dict:
    """One alternating iteration: lookahead (a), weight update (b), model
    update (c). With a label-only cost or a frozen extractor the lookahead
    is pointless and skipped.

    `weights` is either a WeightState (direct) or WeightNetParams (amortized).
    """
    idx = np.asarray(batch_indices)
    amortized = isinstance(weights, WeightNetParams)

    skip_a = cost_cfg.kind == "label" or hyper.freeze_extractor_stage2
    if skip_a:
        lookahead = model_params
    else:
        if amortized:
            Z = mlp.extract_features(model_params, batch_x)
            w_cur = weight_net_forward(Z, weights)
        else:
            w_cur = batch_weights(weights, idx)
        lookahead = mlp.lookahead_params(model_params, batch_x, batch_y,
                                         w_cur, hyper.alpha)

    if amortized:
        ot_cost = weight_net_update(weights, batch_x, batch_y, lookahead, Q,
                                    cfg, cost_cfg, beta=hyper.beta, rng=rng)
        Z = mlp.extract_features(model_params, batch_x)
        w_new = weight_net_forward(Z, weights)
    else:
        ot_cost = weight_update_direct(weights, idx, batch_x, batch_y,
                                       lookahead, Q, cost_cfg=cost_cfg,
                                       cfg=cfg, steps=inner_steps, rng=rng)
        w_new = batch_weights(weights, idx)

    loss = mlp.train_step(model_params, batch_x, batch_y, w_new,
                          hyper, freeze_extractor=hyper.freeze_extractor_stage2)
    return {"ot_cost": float(ot_cost), "ce_loss": float(loss),
            "step_a_skipped": skip_a, "batch_weights": w_new}
