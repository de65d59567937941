"""Flat key=value configuration with dotted keys.

Example file:

    method=ot_direct
    cost.kind=combined
    q.mode=prototype
    train.alpha=2e-5
    train.beta=1e-3
    sinkhorn.lambda=0.1
    sinkhorn.max_iter=200
    weights.mode=maintained

Command-line flags override file values; every run echoes the fully resolved
config next to its outputs so it can be replayed.
"""

from __future__ import annotations

from pathlib import Path

from .data import LongTailSpec
from .evaluation import ConfigError, ExperimentConfig
from .ot_core import SinkhornConfig
from .reweight import CostConfig

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    try:
        return _BOOL[str(v).lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {v!r}") from None


_SCHEMA = {
    "method": str,
    "seed": int,
    "dump_weights": _as_bool,
    "cost.kind": str,
    "cost.label_coeff": float,
    "q.mode": str,
    "q.sample_k": int,
    "weights.mode": str,
    "weights.variant": str,
    "weights.reduction": str,
    "sinkhorn.lambda": float,
    "sinkhorn.max_iter": int,
    "sinkhorn.tol": float,
    "train.alpha": float,
    "train.alpha1": float,
    "train.beta": float,
    "train.momentum": float,
    "train.weight_decay": float,
    "train.batch_size": int,
    "train.epochs1": int,
    "train.epochs2": int,
    "train.freeze_extractor": _as_bool,
    "train.inner_steps": int,
    "data.classes": int,
    "data.n_head": int,
    "data.if": float,
    "data.dim": int,
    "data.separation": float,
    "data.test_per_class": int,
    "data.meta_per_class": int,
}

# keys that only make sense for the transport-based methods
_OT_ONLY_PREFIXES = ("q.", "weights.")


def build_experiment_config(mapping: dict) -> ExperimentConfig:
    """Typed ExperimentConfig from a flat string mapping."""
    typed = {}
    for key, value in mapping.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            typed[key] = _SCHEMA[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc

    method = typed.get("method", "ot_direct")
    if method in ("ce", "proportion"):
        bad = [k for k in typed if k.startswith(_OT_ONLY_PREFIXES)]
        if bad:
            raise ConfigError(
                f"key(s) {bad} are only valid for transport methods, "
                f"not method={method}"
            )

    cost = CostConfig(kind=typed.get("cost.kind", "combined"),
                      label_coeff=typed.get("cost.label_coeff", 1.0))
    sinkhorn = SinkhornConfig(lam=typed.get("sinkhorn.lambda", 0.1),
                              max_iter=typed.get("sinkhorn.max_iter", 200),
                              tol=typed.get("sinkhorn.tol", 1e-6))
    data = LongTailSpec(
        num_classes=typed.get("data.classes", 10),
        n_head=typed.get("data.n_head", 100),
        imbalance_factor=typed.get("data.if", 100.0),
        dim=typed.get("data.dim", 16),
        class_separation=typed.get("data.separation", 3.0),
        test_per_class=typed.get("data.test_per_class", 50),
        seed=typed.get("seed", 0),
    )
    return ExperimentConfig(
        method=method,
        cost=cost,
        q_mode=typed.get("q.mode", "prototype"),
        q_sample_k=typed.get("q.sample_k", 3),
        weights_mode=typed.get("weights.mode", "maintained"),
        net_variant=typed.get("weights.variant", "attention"),
        net_reduction=typed.get("weights.reduction", "row_mean"),
        sinkhorn=sinkhorn,
        alpha_stage1=typed.get("train.alpha1", 0.1),
        alpha=typed.get("train.alpha", 2e-5),
        beta=typed.get("train.beta", 1e-3),
        momentum=typed.get("train.momentum", 0.9),
        weight_decay=typed.get("train.weight_decay", 5e-4),
        batch_size=typed.get("train.batch_size", 64),
        epochs_stage1=typed.get("train.epochs1", 20),
        epochs_stage2=typed.get("train.epochs2", 20),
        freeze_extractor_stage2=typed.get("train.freeze_extractor", False),
        inner_steps=typed.get("train.inner_steps", 1),
        data=data,
        meta_per_class=typed.get("data.meta_per_class", 10),
        seed=typed.get("seed", 0),
        dump_weights=typed.get("dump_weights", False),
    )


def resolved_config_text(cfg: ExperimentConfig) -> str:
    """Flat key=value dump that reproduces cfg through build_experiment_config."""
    pairs = [
        ("method", cfg.method),
        ("seed", cfg.seed),
        ("dump_weights", str(cfg.dump_weights).lower()),
        ("cost.kind", cfg.cost.kind),
        ("cost.label_coeff", cfg.cost.label_coeff),
        ("q.mode", cfg.q_mode),
        ("q.sample_k", cfg.q_sample_k),
        ("weights.mode", cfg.weights_mode),
        ("weights.variant", cfg.net_variant),
        ("weights.reduction", cfg.net_reduction),
        ("sinkhorn.lambda", cfg.sinkhorn.lam),
        ("sinkhorn.max_iter", cfg.sinkhorn.max_iter),
        ("sinkhorn.tol", cfg.sinkhorn.tol),
        ("train.alpha", cfg.alpha),
        ("train.alpha1", cfg.alpha_stage1),
        ("train.beta", cfg.beta),
        ("train.momentum", cfg.momentum),
        ("train.weight_decay", cfg.weight_decay),
        ("train.batch_size", cfg.batch_size),
        ("train.epochs1", cfg.epochs_stage1),
        ("train.epochs2", cfg.epochs_stage2),
        ("train.freeze_extractor", str(cfg.freeze_extractor_stage2).lower()),
        ("train.inner_steps", cfg.inner_steps),
        ("data.classes", cfg.data.num_classes),
        ("data.n_head", cfg.data.n_head),
        ("data.if", cfg.data.imbalance_factor),
        ("data.dim", cfg.data.dim),
        ("data.separation", cfg.data.class_separation),
        ("data.test_per_class", cfg.data.test_per_class),
        ("data.meta_per_class", cfg.meta_per_class),
    ]
    if cfg.method in ("ce", "proportion"):
        pairs = [(k, v) for k, v in pairs
                 if not k.startswith(("q.", "weights."))]
    return "\n".join(f"{k}={v}" for k, v in pairs) + "\n"
