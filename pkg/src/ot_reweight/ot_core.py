"""Entropy-regularized optimal transport in the log domain.

Solves min_T <T, C> - lam * H(T) over couplings with marginals (a, b),
where H(T) = -sum T_ij log T_ij, using dual-potential (f, g) updates.
Working in the log domain keeps C / lam up to a few hundred from
underflowing the kernel.

The entropy penalty is written relative to the product coupling a x b
(lam * KL(T || a b^T)), which fixes the regularized problem's value at 0 for
a zero cost matrix and makes the stored dual potential f the exact gradient
of the regularized cost with respect to the source marginal a (envelope
theorem). The argmin plan is identical to the plain-entropy formulation.
`grad_ot_wrt_source` returns f centered so the gauge freedom f -> f + c,
g -> g - c is fixed by sum(f) = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SinkhornConfig",
    "TransportPlan",
    "sinkhorn_plan",
    "grad_ot_wrt_source",
    "finite_diff_grad",
    "joint_min_oracle",
    "validate_marginal",
    "NonConvergenceWarning",
]


class NonConvergenceWarning(UserWarning):
    """Sinkhorn hit max_iter before the marginal-violation threshold."""


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 0.1
    max_iter: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass
class TransportPlan:
    plan: np.ndarray          # (B, M), strictly positive
    dual_row: np.ndarray      # f, centered so sum(f) = 0
    dual_col: np.ndarray      # g
    ot_cost: float            # <T, C>
    reg_cost: float           # <T, C> + lam * KL(T || a b^T); f is its exact gradient in a
    iterations: int
    marginal_violation: float
    converged: bool


def validate_marginal(m: np.ndarray, name: str = "marginal") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(m < 0):
        raise ValueError(f"{name} contains negative entries")
    if abs(m.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {m.sum()!r}, expected 1")
    return m


def _check_inputs(C, a, b):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(C < 0):
        raise ValueError("cost matrix contains negative entries")
    a = validate_marginal(a, "source marginal a")
    b = validate_marginal(b, "target marginal b")
    if C.shape != (a.size, b.size):
        raise ValueError(
            f"shape mismatch: C is {C.shape}, a has {a.size}, b has {b.size}"
        )
    if np.any(a == 0) or np.any(b == 0):
        raise ValueError(
            "marginals must be strictly positive; drop zero-mass atoms first"
        )
    return C, a, b


def _logsumexp(A: np.ndarray, axis: int) -> np.ndarray:
    mx = A.max(axis=axis, keepdims=True)
    out = mx + np.log(np.exp(A - mx).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def sinkhorn_plan(C, a, b, cfg: SinkhornConfig = SinkhornConfig(),
                  init_g=None) -> TransportPlan:
    """Log-domain Sinkhorn. Stops on L1 marginal violation < cfg.tol.

    init_g warm-starts the column potential from a previous plan's dual_col
    (e.g. across an outer gradient loop); it changes iteration count, not
    the solution.
    """
    C, a, b = _check_inputs(C, a, b)
    lam = cfg.lam
    log_a, log_b = np.log(a), np.log(b)

    f = np.zeros(a.size)
    if init_g is None:
        g = np.zeros(b.size)
    else:
        # undo the stored KL-convention offset
        g = np.asarray(init_g, dtype=float) + lam * log_b
    violation = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        # alternate exact row / column scalings of T = exp((f + g - C)/lam)
        f = lam * log_a - lam * _logsumexp((g[None, :] - C) / lam, axis=1)
        g = lam * log_b - lam * _logsumexp((f[:, None] - C) / lam, axis=0)
        T = np.exp((f[:, None] + g[None, :] - C) / lam)
        violation = np.abs(T.sum(axis=1) - a).sum() + np.abs(T.sum(axis=0) - b).sum()
        if violation < cfg.tol:
            break
    converged = violation < cfg.tol

    # switch to the KL-against-product convention, then fix the gauge
    f = f - lam * log_a
    g = g - lam * log_b
    shift = f.mean()
    f = f - shift
    g = g + shift

    T = a[:, None] * b[None, :] * np.exp((f[:, None] + g[None, :] - C) / lam)
    ot_cost = float((T * C).sum())
    kl = float((T * (np.log(T) - log_a[:, None] - log_b[None, :])).sum())
    reg_cost = ot_cost + lam * kl
    return TransportPlan(
        plan=T,
        dual_row=f,
        dual_col=g,
        ot_cost=ot_cost,
        reg_cost=reg_cost,
        iterations=it,
        marginal_violation=float(violation),
        converged=converged,
    )


def grad_ot_wrt_source(C, a, b, cfg: SinkhornConfig = SinkhornConfig()) -> np.ndarray:
    """Gradient of the entropic transport cost w.r.t. the source marginal.

    Equals the centered dual potential f of the converged plan; exact at
    convergence against simplex-tangent perturbations of a. Non-convergence
    raises NonConvergenceWarning but still returns the (approximate) f.
    """
    plan = sinkhorn_plan(C, a, b, cfg)
    if not plan.converged:
        warnings.warn(
            f"Sinkhorn stopped at violation {plan.marginal_violation:.3e} "
            f"after {plan.iterations} iterations; gradient is approximate",
            NonConvergenceWarning,
        )
    return plan.dual_row


def finite_diff_grad(C, a, b, cfg: SinkhornConfig, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the regularized cost (test oracle).

    Differences along the simplex-tangent directions e_i - 1/B so perturbed
    marginals stay on the simplex; the result is sum-zero and directly
    comparable to the centered dual potential.
    """
    C, a, b = _check_inputs(C, a, b)
    if step <= 0:
        raise ValueError("step must be positive")
    if np.any(a <= step):
        raise ValueError("source marginal too close to the simplex boundary")

    n = a.size
    grad = np.empty(n)
    for i in range(n):
        d = np.full(n, -1.0 / n)
        d[i] += 1.0
        hi = sinkhorn_plan(C, a + step * d, b, cfg).reg_cost
        lo = sinkhorn_plan(C, a - step * d, b, cfg).reg_cost
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def joint_min_oracle(C, b):
    """Unregularized transport with a free source marginal (closed form).

    Each target atom j sends its whole mass b_j to the cheapest source row of
    column j, split equally over ties. Returns (a_star, plan, cost).
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    b = validate_marginal(b, "target marginal b")
    if C.shape[1] != b.size:
        raise ValueError(f"C has {C.shape[1]} columns but b has {b.size} atoms")

    col_min = C.min(axis=0)
    ties = np.isclose(C, col_min[None, :], rtol=0.0, atol=1e-12)
    plan = ties / ties.sum(axis=0, keepdims=True) * b[None, :]
    a_star = plan.sum(axis=1)
    cost = float(b @ col_min)
    return a_star, plan, cost
