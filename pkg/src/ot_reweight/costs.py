"""Pairwise cost matrices between a training batch and meta atoms."""

from __future__ import annotations

import numpy as np

__all__ = ["label_cost", "feature_cost", "combined_cost", "COST_KINDS"]

COST_KINDS = ("label", "feature", "combined")

_NORM_EPS = 1e-12


def _check_labels(y: np.ndarray, num_classes: int, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError(f"{name} must be integer class ids")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"{name} has ids outside [0, {num_classes})")
    return y


def _check_features(z: np.ndarray, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"{name} must be 2-D (rows, dim)")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite entries")
    return z


def label_cost(y_train, y_meta, num_classes: int) -> np.ndarray:
    """0 where class ids agree, 1 otherwise."""
    y_train = _check_labels(y_train, num_classes, "y_train")
    y_meta = _check_labels(y_meta, num_classes, "y_meta")
    return (y_train[:, None] != y_meta[None, :]).astype(float)


def feature_cost(z_train, z_meta) -> np.ndarray:
    """Cosine distance 1 - cos(z_i, z_j); norms clamped at 1e-12, range [0, 2].

    A zero vector therefore costs 1 against anything (treated as orthogonal).
    """
    z_train = _check_features(z_train, "z_train")
    z_meta = _check_features(z_meta, "z_meta")
    if z_train.shape[1] != z_meta.shape[1]:
        raise ValueError(
            f"feature dims differ: {z_train.shape[1]} vs {z_meta.shape[1]}"
        )
    nt = np.maximum(np.linalg.norm(z_train, axis=1), _NORM_EPS)
    nm = np.maximum(np.linalg.norm(z_meta, axis=1), _NORM_EPS)
    cos = (z_train @ z_meta.T) / np.outer(nt, nm)
    return np.clip(1.0 - cos, 0.0, 2.0)


def combined_cost(z_train, y_train, z_meta, y_meta, num_classes: int,
                  label_coeff: float = 1.0) -> np.ndarray:
    """feature_cost + label_coeff * label_cost, elementwise."""
    if label_coeff < 0:
        raise ValueError("label_coeff must be >= 0")
    C = feature_cost(z_train, z_meta)
    if label_coeff > 0:
        C = C + label_coeff * label_cost(y_train, y_meta, num_classes)
    return C


def build_cost(kind: str, z_train, y_train, z_meta, y_meta, num_classes: int,
               label_coeff: float = 1.0) -> np.ndarray:
    """Dispatch on the configured cost kind."""
    if kind == "label":
        return label_cost(y_train, y_meta, num_classes)
    if kind == "feature":
        return feature_cost(z_train, z_meta)
    if kind == "combined":
        return combined_cost(z_train, y_train, z_meta, y_meta, num_classes,
                             label_coeff)
    raise ValueError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
