"""Model parameters and the parametric function families of the debt problem.

Holds the scalar economic constants (ModelParams), the payment/devaluation
cost families L and c (CostSpec), the bankruptcy-risk family rho (RiskSpec),
the salvage family theta (SalvageSpec), and the capped regularization
rho_eps used by the solver.  All families broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DevaluationDisabledError",
    "ModelParams",
    "CostSpec",
    "RiskSpec",
    "SalvageSpec",
    "RegularizedRisk",
    "regularize_rho",
    "CheckResult",
    "ValidationReport",
    "validate_params",
]


class DevaluationDisabledError(ValueError):
    """Raised when the devaluation cost c is evaluated although v_max = 0."""


# ---------------------------------------------------------------------------
# scalar parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Scalar constants of the debt model."""

    r: float        # interest rate paid on bonds (1/time)
    lam: float      # principal repayment rate (1/time)
    mu: float       # mean income growth rate (1/time)
    sigma: float    # income volatility (1/sqrt(time)), > 0
    B: float        # bankruptcy cost (utility units), >= 0
    x_star: float   # bankruptcy threshold for the debt-to-income ratio, > 0
    v_max: float    # maximal devaluation rate (1/time), >= 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.x_star > 0:
            raise ValueError(f"x_star must be > 0, got {self.x_star}")
        if not self.r > 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.v_max < 0:
            raise ValueError(f"v_max must be >= 0, got {self.v_max}")
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")

    def to_dict(self) -> dict:
        return {
            "r": self.r, "lam": self.lam, "mu": self.mu, "sigma": self.sigma,
            "B": self.B, "x_star": self.x_star, "v_max": self.v_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**{k: float(d[k]) for k in
                      ("r", "lam", "mu", "sigma", "B", "x_star", "v_max")})


# ---------------------------------------------------------------------------
# cost families L (payment) and c (devaluation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostSpec:
    """Convex cost pair (L, c) with derivatives and derivative inverses.

    The built-in barrier family is

        L(u) = alpha_L*u + u^2/(1-u)            on [0, 1),
        c(v) = alpha_c*v + v^2/(v_max-v)        on [0, v_max),

    which blows up at the right endpoint and has closed-form inverses of
    L' and c', so feedback recovery needs no inner optimization.
    With v_max = 0 the devaluation channel is disabled and c is never
    evaluated.
    """

    alpha_L: float                  # L'(0) >= 0
    alpha_c: float                  # c'(0) >= 0
    v_max: float                    # copied from ModelParams
    family: str = "barrier"
    # custom family: (value, derivative, derivative inverse) triples
    L_funcs: tuple | None = field(default=None, repr=False)
    c_funcs: tuple | None = field(default=None, repr=False)
    delta0_custom: float | None = None

    def __post_init__(self):
        if self.alpha_L < 0 or self.alpha_c < 0:
            raise ValueError("alpha_L and alpha_c must be >= 0")
        if self.v_max < 0:
            raise ValueError("v_max must be >= 0")
        if self.family not in ("barrier", "custom"):
            raise ValueError(f"unknown cost family {self.family!r}")
        if self.family == "custom" and self.L_funcs is None:
            raise ValueError("custom cost family requires L_funcs")

    @classmethod
    def custom(cls, alpha_L, alpha_c, v_max, L_funcs, c_funcs=None,
               delta0=None) -> "CostSpec":
        """Cost pair from user-supplied (value, prime, prime_inverse) triples."""
        return cls(alpha_L, alpha_c, v_max, family="custom",
                   L_funcs=L_funcs, c_funcs=c_funcs, delta0_custom=delta0)

    @property
    def delta0(self) -> float:
        """Uniform lower bound on L'' and (when enabled) c''."""
        if self.family == "custom":
            return self.delta0_custom if self.delta0_custom is not None else 0.0
        return 2.0 if self.v_max == 0 else min(2.0, 2.0 / self.v_max)

    # -- payment cost L ------------------------------------------------

    def L(self, u):
        """Payment cost L(u) on [0, 1)."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u >= 1):
            raise ValueError("L requires 0 <= u < 1")
        if self.family == "custom":
            return self.L_funcs[0](u)
        out = self.alpha_L * u + u * u / (1.0 - u)
        return out if out.ndim else float(out)

    def L_prime(self, u):
        """Marginal payment cost L'(u)."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u >= 1):
            raise ValueError("L' requires 0 <= u < 1")
        if self.family == "custom":
            return self.L_funcs[1](u)
        om = 1.0 - u
        out = self.alpha_L + 1.0 / (om * om) - 1.0
        return out if out.ndim else float(out)

    def L_prime_inverse(self, s):
        """Solve L'(u) = s; requires s > alpha_L."""
        s = np.asarray(s, dtype=float)
        if np.any(s <= self.alpha_L):
            raise ValueError("L' inverse requires s > alpha_L")
        if self.family == "custom":
            return self.L_funcs[2](s)
        out = 1.0 - (s - self.alpha_L + 1.0) ** -0.5
        return out if out.ndim else float(out)

    # -- devaluation cost c ---------------------------------------------

    def _require_devaluation(self):
        if self.v_max == 0:
            raise DevaluationDisabledError(
                "devaluation cost disabled: v_max = 0")

    def c(self, v):
        """Devaluation cost c(v) on [0, v_max)."""
        self._require_devaluation()
        v = np.asarray(v, dtype=float)
        if np.any(v < 0) or np.any(v >= self.v_max):
            raise ValueError("c requires 0 <= v < v_max")
        if self.family == "custom":
            return self.c_funcs[0](v)
        out = self.alpha_c * v + v * v / (self.v_max - v)
        return out if out.ndim else float(out)

    def c_prime(self, v):
        """Marginal devaluation cost c'(v)."""
        self._require_devaluation()
        v = np.asarray(v, dtype=float)
        if np.any(v < 0) or np.any(v >= self.v_max):
            raise ValueError("c' requires 0 <= v < v_max")
        if self.family == "custom":
            return self.c_funcs[1](v)
        om = self.v_max - v
        out = self.alpha_c + self.v_max * self.v_max / (om * om) - 1.0
        return out if out.ndim else float(out)

    def c_prime_inverse(self, s):
        """Solve c'(v) = s; requires s > alpha_c."""
        self._require_devaluation()
        s = np.asarray(s, dtype=float)
        if np.any(s <= self.alpha_c):
            raise ValueError("c' inverse requires s > alpha_c")
        if self.family == "custom":
            return self.c_funcs[2](s)
        out = self.v_max * (1.0 - (s - self.alpha_c + 1.0) ** -0.5)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"family": self.family, "alpha_L": self.alpha_L,
                "alpha_c": self.alpha_c, "v_max": self.v_max}

    @classmethod
    def from_dict(cls, d: dict) -> "CostSpec":
        if d.get("family", "barrier") != "barrier":
            raise ValueError("only the barrier cost family round-trips")
        return cls(float(d["alpha_L"]), float(d["alpha_c"]), float(d["v_max"]))


# ---------------------------------------------------------------------------
# bankruptcy risk rho
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiskSpec:
    """Instantaneous bankruptcy risk rho on [0, x_star).

    Built-in family rho(x) = kappa * x * (x_star - x)^(-q), kappa, q > 0.
    q < 1 keeps the integral of rho finite near x_star; q > 2 gives
    rho(x) * (x_star - x)^2 -> infinity.  User families supply an
    evaluator only; the inverse is always computed by bisection.
    """

    x_star: float
    family: str = "barrier"
    kappa: float = 1.0
    q: float = 0.5
    func: Callable | None = field(default=None, repr=False)
    prime_func: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family == "barrier":
            if not (self.kappa > 0 and self.q > 0):
                raise ValueError("barrier risk family requires kappa, q > 0")
        elif self.family == "custom":
            if self.func is None:
                raise ValueError("custom risk family requires an evaluator")
        else:
            raise ValueError(f"unknown risk family {self.family!r}")

    @classmethod
    def custom(cls, func, x_star, prime=None) -> "RiskSpec":
        return cls(x_star=x_star, family="custom", func=func, prime_func=prime)

    def rho(self, x):
        """Evaluate rho; finite only for x < x_star."""
        x = np.asarray(x, dtype=float)
        if self.family == "custom":
            out = np.asarray(self.func(x), dtype=float)
        else:
            out = self.kappa * x * (self.x_star - x) ** -self.q
        return out if out.ndim else float(out)

    def rho_prime(self, x):
        """Derivative of rho (closed form for the built-in family)."""
        x = np.asarray(x, dtype=float)
        if self.family == "custom":
            if self.prime_func is not None:
                out = np.asarray(self.prime_func(x), dtype=float)
            else:
                h = 1e-7 * self.x_star
                out = (self.rho(np.minimum(x + h, self.x_star * (1 - 1e-12)))
                       - self.rho(np.maximum(x - h, 0.0))) / (2 * h)
                out = np.asarray(out, dtype=float)
        else:
            s = self.x_star - x
            out = self.kappa * s ** -(self.q + 1.0) * (s + self.q * x)
        return out if out.ndim else float(out)

    def inverse(self, level: float) -> float:
        """Smallest x with rho(x) >= level, by monotone bisection.

        Relative tolerance 1e-12; the returned point always satisfies
        rho(x) >= level so that capping at x keeps rho_eps <= rho.
        """
        if level <= 0:
            return 0.0
        lo, hi = 0.0, self.x_star * (1.0 - 1e-15)
        if self.rho(hi) < level:
            return hi  # blow-up too slow to reach level in double precision
        while hi - lo > 1e-12 * max(hi, 1e-300):
            mid = 0.5 * (lo + hi)
            if self.rho(mid) >= level:
                hi = mid
            else:
                lo = mid
        return hi

    def to_dict(self) -> dict:
        d = {"family": self.family, "x_star": self.x_star}
        if self.family == "barrier":
            d.update(kappa=self.kappa, q=self.q)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RiskSpec":
        if d.get("family", "barrier") != "barrier":
            raise ValueError("only the barrier risk family round-trips")
        return cls(x_star=float(d["x_star"]), kappa=float(d["kappa"]),
                   q=float(d["q"]))


# ---------------------------------------------------------------------------
# salvage rate theta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SalvageSpec:
    """Salvage rate theta on [0, x_star]: fraction recovered at bankruptcy.

    Built-in family theta(x) = 1 - m*x/x_star with 0 <= m < 1, hence
    theta(x_star) = 1 - m.
    """

    x_star: float
    family: str = "linear"
    m: float = 0.0
    func: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family == "linear":
            if not (0 <= self.m < 1):
                raise ValueError("linear salvage family requires 0 <= m < 1")
        elif self.family == "custom":
            if self.func is None:
                raise ValueError("custom salvage family requires an evaluator")
        else:
            raise ValueError(f"unknown salvage family {self.family!r}")

    @classmethod
    def custom(cls, func, x_star) -> "SalvageSpec":
        return cls(x_star=x_star, family="custom", func=func)

    def theta(self, x):
        """Evaluate theta on [0, x_star]."""
        x = np.asarray(x, dtype=float)
        if self.family == "custom":
            out = np.asarray(self.func(x), dtype=float)
        else:
            out = 1.0 - self.m * x / self.x_star
        return out if out.ndim else float(out)

    def theta_at_x_star(self) -> float:
        if self.family == "linear":
            return 1.0 - self.m
        return float(self.func(self.x_star))

    def lipschitz_bound(self, n: int = 10_000) -> float:
        """Max slope of theta on [0, x_star/2], from a fine grid.

        Exact (m/x_star) for the linear family.
        """
        if self.family == "linear":
            return self.m / self.x_star
        xs = np.linspace(0.0, 0.5 * self.x_star, n + 1)
        th = self.theta(xs)
        return float(np.max(np.abs(np.diff(th))) / (xs[1] - xs[0]))

    def to_dict(self) -> dict:
        d = {"family": self.family, "x_star": self.x_star}
        if self.family == "linear":
            d["m"] = self.m
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SalvageSpec":
        if d.get("family", "linear") != "linear":
            raise ValueError("only the linear salvage family round-trips")
        return cls(x_star=float(d["x_star"]), m=float(d["m"]))


# ---------------------------------------------------------------------------
# capped risk rho_eps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizedRisk:
    """Monotone Lipschitz cap of rho: rho_eps = rho below x_eps, 1/eps above."""

    risk: RiskSpec
    epsilon: float
    x_eps: float    # crossover solving rho(x_eps) = 1/eps

    @property
    def cap(self) -> float:
        return 1.0 / self.epsilon

    def rho_eps(self, x):
        """Evaluate the capped risk; safe at and beyond x_eps."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.cap)
        below = x < self.x_eps
        if np.any(below):
            out[below] = np.minimum(self.risk.rho(x[below]), self.cap)
        return out if out.ndim else float(out)


def regularize_rho(risk: RiskSpec, epsilon: float) -> RegularizedRisk:
    """Cap rho at 1/eps beyond the crossover x_eps = rho^{-1}(1/eps)."""
    if not 0 < epsilon <= 0.5:
        raise ValueError("epsilon must lie in (0, 1/2]")
    x_eps = risk.inverse(1.0 / epsilon)
    return RegularizedRisk(risk=risk, epsilon=epsilon, x_eps=x_eps)


# ---------------------------------------------------------------------------
# assumption validation
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: float | None = None   # grid point of the first violation
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "witness": self.witness, "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def _first_violation(xs, bad_mask):
    idx = np.flatnonzero(bad_mask)
    return float(xs[idx[0]]) if idx.size else None


def validate_params(params: ModelParams, costs: CostSpec, risk: RiskSpec,
                    salvage: SalvageSpec, n_grid: int = 10_000) -> ValidationReport:
    """Check the standing assumptions on a validation grid.

    Failures are reported with a witness point, never raised.  Monotonicity
    of theta, sign of rho', convexity of L and c, and the blow-up behavior
    of rho, L and c are all checked numerically on n_grid points.
    """
    checks = []

    checks.append(CheckResult("sigma_positive", params.sigma > 0,
                              detail=f"sigma = {params.sigma}"))
    checks.append(CheckResult("x_star_positive", params.x_star > 0,
                              detail=f"x_star = {params.x_star}"))

    # (A1): theta non-increasing, range (0, 1], bounded slope on [0, x_star)
    xs = np.linspace(0.0, params.x_star, n_grid)
    th = np.asarray(salvage.theta(xs), dtype=float)
    bad = ~((th > 0) & (th <= 1) & np.isfinite(th))
    checks.append(CheckResult("A1_theta_range", not bad.any(),
                              _first_violation(xs, bad),
                              "theta must map into (0, 1]"))
    dth = np.diff(th)
    bad = dth > 1e-12
    checks.append(CheckResult("A1_theta_nonincreasing", not bad.any(),
                              _first_violation(xs[1:], bad),
                              "theta must be non-increasing"))
    h = xs[1] - xs[0]
    interior = slice(0, n_grid - max(2, n_grid // 100))  # away from x_star
    slopes = np.abs(dth[interior]) / h
    bad = ~np.isfinite(slopes) | (slopes > 1e12)
    checks.append(CheckResult("A1_theta_lipschitz", not bad.any(),
                              _first_violation(xs[1:][interior], bad),
                              f"max interior slope {np.max(slopes):.3g}"
                              if np.isfinite(slopes).all() else "slope not finite"))

    # (A2): rho(0) = 0, rho' >= 0, blow-up at x_star
    xr = np.linspace(0.0, params.x_star * (1 - 1e-6), n_grid)
    rho = np.asarray(risk.rho(xr), dtype=float)
    checks.append(CheckResult("A2_rho_zero_at_origin", abs(rho[0]) <= 1e-12,
                              0.0 if abs(rho[0]) > 1e-12 else None,
                              f"rho(0) = {rho[0]:.3g}"))
    drho = np.diff(rho)
    bad = drho < -1e-10 * max(1.0, np.max(np.abs(rho[np.isfinite(rho)])))
    checks.append(CheckResult("A2_rho_nondecreasing", not bad.any(),
                              _first_violation(xr[1:], bad),
                              "rho must be non-decreasing"))
    tail = np.array([float(risk.rho(params.x_star * (1 - 10.0 ** -k)))
                     for k in range(2, 9)])
    grows = np.all(np.diff(tail) > 0) and tail[-1] >= 100.0 * max(tail[0], 1e-30)
    checks.append(CheckResult("A2_rho_blowup", bool(grows),
                              None if grows else params.x_star,
                              f"rho at x_star*(1-10^-k), k=2..8: "
                              f"{tail[0]:.3g} .. {tail[-1]:.3g}"))

    # (A3) for L: L(0) = 0, L' > 0 away from 0, L'' >= delta0, blow-up at 1
    checks.extend(_check_convex_cost(
        "L", costs.L, costs.L_prime, costs.delta0, right_end=1.0,
        n_grid=n_grid))

    # (A3) for c: identical checks, skipped when devaluation is disabled
    if costs.v_max > 0:
        checks.extend(_check_convex_cost(
            "c", costs.c, costs.c_prime, costs.delta0,
            right_end=costs.v_max, n_grid=n_grid))
    else:
        checks.append(CheckResult("A3_c_disabled", True,
                                  detail="v_max = 0: devaluation disabled"))

    return ValidationReport(checks)


def _check_convex_cost(tag, value, prime, delta0, right_end, n_grid):
    """Shared (A3) grid checks for one cost function on [0, right_end)."""
    checks = []
    z0 = float(value(0.0))
    checks.append(CheckResult(f"A3_{tag}_zero_at_origin", abs(z0) <= 1e-12,
                              0.0 if abs(z0) > 1e-12 else None,
                              f"{tag}(0) = {z0:.3g}"))
    us = np.linspace(0.0, right_end * (1 - 1e-6), n_grid)
    dp = np.asarray(prime(us), dtype=float)
    bad = dp[1:] <= 0  # equality permitted only at the origin
    checks.append(CheckResult(f"A3_{tag}_prime_positive", not bad.any(),
                              _first_violation(us[1:], bad),
                              f"{tag}' must be positive away from 0"))
    # scale-aware central difference of the derivative
    hs = 1e-6 * (right_end - us[1:-1])
    second = (np.asarray(prime(np.minimum(us[1:-1] + hs, right_end * (1 - 1e-9))))
              - np.asarray(prime(us[1:-1] - hs))) / (2 * hs)
    floor = delta0 if delta0 > 0 else 1e-12
    bad = second < floor * (1 - 1e-3)
    checks.append(CheckResult(f"A3_{tag}_convexity", not bad.any(),
                              _first_violation(us[1:-1], bad),
                              f"{tag}'' must stay above {floor:.3g}"))
    blow = float(value(right_end * (1 - 1e-9)))
    checks.append(CheckResult(f"A3_{tag}_blowup", blow >= 1e6,
                              None if blow >= 1e6 else right_end,
                              f"{tag} near its right endpoint: {blow:.3g}"))
    return checks
