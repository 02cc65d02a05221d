"""Hamiltonian of the debt system: value, closed-form minimizers, gradient.

H(x, xi, p) couples the running costs with the controlled drift,

    H = min_{u, v} { L(u) + c(v) - (u/p + x v) xi }
        + ((lam + r)/p - lam + sigma^2 - mu) x xi,

minimized over u in [0, 1) and v in [0, v_max).  Strict convexity with
barrier blow-up makes the minimizers interior and explicit through the
derivative inverses of L and c.  The gradient is available in closed form;
theta_min and K1 give the uniform bounds used by the a-priori estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CostSpec, ModelParams, SalvageSpec

__all__ = [
    "HamiltonianEval",
    "BoundConstants",
    "u_tilde",
    "v_tilde",
    "eval_H",
    "theta_min",
    "bound_K1",
    "bound_constants",
]


@dataclass(frozen=True)
class HamiltonianEval:
    """Value, minimizing controls and gradient of H at one or many points."""

    value: float | np.ndarray
    u_opt: float | np.ndarray   # in [0, 1)
    v_opt: float | np.ndarray   # in [0, v_max)
    grad: tuple                 # (H_x, H_xi, H_p)


@dataclass(frozen=True)
class BoundConstants:
    """Lower bound theta_min of the bond price and uniform bound K1 on H."""

    theta_min: float    # in (0, 1]
    K1: float           # |H| <= K1*xi, |H_xi| <= K1 on the solution box


def u_tilde(xi, p, costs: CostSpec):
    """Optimal payment fraction: 0 below the L'(0) threshold, else (L')^{-1}(xi/p).

    Negative costates (transient solver iterates) clamp to 0.
    """
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("u_tilde requires p > 0")
    ratio = xi / p
    out = np.zeros(np.broadcast(xi, p).shape)
    active = ratio > costs.alpha_L
    if np.any(active):
        out[active] = costs.L_prime_inverse(np.broadcast_to(ratio, out.shape)[active])
    return out if out.ndim else float(out)


def v_tilde(x, xi, costs: CostSpec):
    """Optimal devaluation rate: 0 below the c'(0) threshold, else (c')^{-1}(x*xi).

    Identically 0 when v_max = 0 (devaluation disabled).
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(np.broadcast(x, xi).shape)
    if costs.v_max == 0:
        return out if out.ndim else float(out)
    lever = x * xi
    active = lever > costs.alpha_c
    if np.any(active):
        out[active] = costs.c_prime_inverse(np.broadcast_to(lever, out.shape)[active])
    return out if out.ndim else float(out)


def eval_H(x, xi, p, params: ModelParams, costs: CostSpec) -> HamiltonianEval:
    """Evaluate H, its minimizers and its gradient at (x, xi, p).

    Broadcasts over numpy arrays.  The gradient follows the closed forms

        H_x  = [(lam+r) - p(lam+mu+v-sigma^2)] * xi/p,
        H_xi = [x((lam+r) - p(lam+mu+v-sigma^2)) - u] / p,
        H_p  = (u - x(lam+r)) * xi/p^2,

    with the minimizers (u, v) substituted.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("eval_H requires p > 0")
    lam, r, mu, sig2 = params.lam, params.r, params.mu, params.sigma ** 2

    u = np.asarray(u_tilde(xi, p, costs))
    v = np.asarray(v_tilde(x, xi, costs))

    Lu = _cost_L_safe(costs, u)
    cv = _cost_c_safe(costs, v)
    drift0 = ((lam + r) / p - lam + sig2 - mu) * x
    value = Lu + cv - (u / p + x * v) * xi + drift0 * xi

    core = (lam + r) - p * (lam + mu + v - sig2)
    H_x = core * xi / p
    H_xi = (x * core - u) / p
    H_p = (u - x * (lam + r)) * xi / (p * p)

    if value.ndim == 0:
        return HamiltonianEval(float(value), float(u), float(v),
                               (float(H_x), float(H_xi), float(H_p)))
    return HamiltonianEval(value, u, v, (H_x, H_xi, H_p))


def _cost_L_safe(costs, u):
    """L on possibly-masked arrays (zeros where inactive)."""
    u = np.asarray(u, dtype=float)
    return np.asarray(costs.L(np.clip(u, 0.0, 1.0 - 1e-15)))


def _cost_c_safe(costs, v):
    if costs.v_max == 0:
        return np.zeros_like(np.asarray(v, dtype=float))
    v = np.asarray(v, dtype=float)
    return np.asarray(costs.c(np.clip(v, 0.0, costs.v_max * (1.0 - 1e-15))))


def theta_min(params: ModelParams, salvage: SalvageSpec) -> float:
    """Lower bound of the bond price: min{theta(x_star), (r+lam)/(r+lam+v_max)}."""
    rl = params.r + params.lam
    return min(salvage.theta_at_x_star(), rl / (rl + params.v_max))


def bound_K1(params: ModelParams, theta_min_value: float) -> float:
    """Uniform Hamiltonian bound K1 on [0,x*] x (0,inf) x [theta_min, 1]."""
    if theta_min_value <= 0:
        raise ValueError("theta_min must be positive")
    lam, r, sig2, xs = params.lam, params.r, params.sigma ** 2, params.x_star
    return max(((lam + r) / theta_min_value + sig2) * xs,
               1.0 / theta_min_value + (lam + params.mu + params.v_max) * xs)


def bound_constants(params: ModelParams, salvage: SalvageSpec) -> BoundConstants:
    """theta_min and K1 bundled."""
    tm = theta_min(params, salvage)
    return BoundConstants(theta_min=tm, K1=bound_K1(params, tm))
