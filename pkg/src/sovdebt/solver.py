"""Steady-state solver for the regularized coupled value/bond-price system.

Solves, on a uniform grid over [0, x_star] with Dirichlet data
V(0)=0, V(x_star)=B, p(0)=1, p(x_star)=theta(x_star),

    (r + rho_eps) V = rho_eps B + H(x, V', p+eps) + (sigma^2 x^2/2 + eps) V''
    (r + lam + v) p = (r + lam) + rho_eps (theta - p)
                      + H_xi(x, V', p+eps) p' + (sigma^2 x^2/2 + eps) p''

as the steady state of the matching parabolic relaxation.  Advection is
upwinded on the sign of the frozen-control drift, which keeps the linearized
operators M-matrices.  The outer loop runs damped pseudo-time steps
(reaction handled pointwise-implicitly; diffusion/advection explicit under
a CFL bound) and switches to Howard policy iteration - freeze controls,
solve the two tridiagonal systems, repeat - once the residual is small or
the explicit budget is spent.  Continuation lowers eps along a schedule,
warm-starting each level from the previous one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .hamiltonian import u_tilde, v_tilde
from .model import (CostSpec, ModelParams, RegularizedRisk, RiskSpec,
                    SalvageSpec, regularize_rho)

__all__ = [
    "Grid",
    "SolverConfig",
    "Solution",
    "ContinuationTrace",
    "NonConvergence",
    "InstabilityDetected",
    "solve_regularized",
    "continuation_solve",
    "residual",
    "extract_feedback",
    "save_solution",
    "load_solution",
]

DEFAULT_EPS_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


class NonConvergence(RuntimeError):
    """Iteration budget exhausted above tolerance; carries diagnostics."""

    def __init__(self, message, solution=None, epsilon=None):
        super().__init__(message)
        self.solution = solution
        self.epsilon = epsilon


class InstabilityDetected(RuntimeError):
    """NaN or Inf appeared in an iterate."""

    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [0, x_star] with n nodes."""

    n: int
    x_star: float

    def __post_init__(self):
        if self.n < 101:
            raise ValueError("grid needs at least 101 nodes")
        if not self.x_star > 0:
            raise ValueError("x_star must be positive")

    @cached_property
    def nodes(self) -> np.ndarray:
        xs = np.linspace(0.0, self.x_star, self.n)
        xs[0], xs[-1] = 0.0, self.x_star  # exact endpoints
        return xs

    @property
    def h(self) -> float:
        return self.x_star / (self.n - 1)


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and iteration controls."""

    n: int = 801
    epsilon_schedule: tuple = DEFAULT_EPS_SCHEDULE
    pseudo_time_safety: float = 0.9      # fraction of the explicit CFL limit
    steady_state_tol: float = 1e-8       # max-norm of both stationary residuals
    max_iterations: int = 300            # Howard iterations per eps level
    policy_iteration: bool = True
    howard_threshold: float = 1e-3       # residual level that enables Howard
    max_explicit_steps: int = 4000       # pseudo-time budget per eps level

    def __post_init__(self):
        eps = tuple(self.epsilon_schedule)
        if not eps or any(not 0 < e <= 0.5 for e in eps):
            raise ValueError("epsilon schedule entries must lie in (0, 1/2]")
        if any(b >= a for a, b in zip(eps[:-1], eps[1:])) and len(eps) > 1:
            if not all(b < a for a, b in zip(eps[:-1], eps[1:])):
                raise ValueError("epsilon schedule must be strictly decreasing")
        if self.steady_state_tol <= 0 or self.pseudo_time_safety <= 0:
            raise ValueError("tolerances must be positive")
        object.__setattr__(self, "epsilon_schedule", eps)


@dataclass
class Solution:
    """Grid-sampled fields of one regularized solve plus diagnostics."""

    grid: Grid
    V: np.ndarray
    p: np.ndarray
    dV: np.ndarray
    dp: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    epsilon: float
    res_V: np.ndarray
    res_p: np.ndarray
    iterations: int
    converged: bool
    params: ModelParams = None
    costs: CostSpec = None
    risk: RiskSpec = None
    salvage: SalvageSpec = None

    @property
    def residual_max(self) -> float:
        return max(float(np.max(np.abs(self.res_V))),
                   float(np.max(np.abs(self.res_p))))


@dataclass
class ContinuationTrace:
    """Interior max-norm gaps between consecutive eps levels."""

    epsilons: list = field(default_factory=list)
    entries: list = field(default_factory=list)   # dicts with eps_from/eps_to/dV/dp/d_max

    def d_max_series(self) -> list:
        return [e["d_max"] for e in self.entries]

    def to_dict(self) -> dict:
        return {"epsilons": list(self.epsilons), "entries": list(self.entries)}


def _one_sided_derivative(F: np.ndarray, h: float) -> np.ndarray:
    """Central derivative in the interior, one-sided at the endpoints."""
    d = np.empty_like(F)
    d[1:-1] = (F[2:] - F[:-2]) / (2.0 * h)
    d[0] = (F[1] - F[0]) / h
    d[-1] = (F[-1] - F[-2]) / h
    return d


class _Discretization:
    """Per-level precomputed arrays and the upwind stencil machinery."""

    def __init__(self, params, costs, risk, salvage, epsilon, grid):
        self.params, self.costs = params, costs
        self.grid, self.eps = grid, epsilon
        self.x = grid.nodes
        self.h = grid.h
        self.rre: RegularizedRisk = regularize_rho(risk, epsilon)
        self.rho = np.asarray(self.rre.rho_eps(self.x))
        self.theta = np.asarray(salvage.theta(self.x), dtype=float)
        self.D = 0.5 * params.sigma ** 2 * self.x ** 2 + epsilon
        self.B = params.B
        self.p_right = salvage.theta_at_x_star()

    def controls_and_drift(self, V, p):
        """Frozen controls, drift coefficient and running cost from (V, p).

        Controls come from the central derivative of V; the drift is the
        xi-coefficient of the Hamiltonian with those controls substituted,
        evaluated at the shifted price p + eps.
        """
        prm = self.params
        dV = _one_sided_derivative(V, self.h)
        p_arg = np.maximum(p + self.eps, 1e-12)
        # clip: explosive transients can round the minimizers onto the
        # barrier, where the costs are undefined
        u = np.minimum(np.asarray(u_tilde(np.maximum(dV, 0.0), p_arg,
                                          self.costs)), 1.0 - 1e-12)
        v = np.asarray(v_tilde(self.x, np.maximum(dV, 0.0), self.costs))
        if self.costs.v_max > 0:
            v = np.minimum(v, self.costs.v_max * (1.0 - 1e-12))
        drift = ((prm.lam + prm.r) / p_arg - prm.lam + prm.sigma ** 2
                 - prm.mu) * self.x - u / p_arg - v * self.x
        running = np.asarray(self.costs.L(u))
        if self.costs.v_max > 0:
            running = running + np.asarray(self.costs.c(v))
        return dV, u, v, drift, running

    def upwind(self, F, a):
        """a+ * forward difference + a- * backward difference, interior nodes."""
        h = self.h
        a_int = a[1:-1]
        fwd = (F[2:] - F[1:-1]) / h
        bwd = (F[1:-1] - F[:-2]) / h
        return np.maximum(a_int, 0.0) * fwd + np.minimum(a_int, 0.0) * bwd

    def second(self, F):
        return (F[2:] - 2.0 * F[1:-1] + F[:-2]) / self.h ** 2

    def residuals(self, V, p):
        """Stationary residuals of both equations with the solver stencils."""
        prm = self.params
        dV, u, v, drift, running = self.controls_and_drift(V, p)
        res_V = np.zeros_like(V)
        res_p = np.zeros_like(p)
        res_V[1:-1] = ((prm.r + self.rho[1:-1]) * V[1:-1]
                       - self.rho[1:-1] * self.B - running[1:-1]
                       - self.upwind(V, drift)
                       - self.D[1:-1] * self.second(V))
        res_p[1:-1] = ((prm.r + prm.lam + v[1:-1] + self.rho[1:-1]) * p[1:-1]
                       - (prm.r + prm.lam) - self.rho[1:-1] * self.theta[1:-1]
                       - self.upwind(p, drift)
                       - self.D[1:-1] * self.second(p))
        return res_V, res_p

    def residual_max(self, V, p):
        res_V, res_p = self.residuals(V, p)
        return max(float(np.max(np.abs(res_V))), float(np.max(np.abs(res_p))))

    def _solve_tridiagonal(self, reac, drift, source, left, right):
        """Solve the upwinded linear steady equation for one field."""
        h, D = self.h, self.D[1:-1]
        a_int = drift[1:-1]
        ap = np.maximum(a_int, 0.0)
        am = np.minimum(a_int, 0.0)
        lower = am / h - D / h ** 2          # multiplies F_{i-1}
        diag = reac[1:-1] + (ap - am) / h + 2.0 * D / h ** 2
        upper = -ap / h - D / h ** 2         # multiplies F_{i+1}
        rhs = source[1:-1].copy()
        rhs[0] -= lower[0] * left
        rhs[-1] -= upper[-1] * right
        ab = np.zeros((3, diag.size))
        ab[0, 1:] = upper[:-1]
        ab[1, :] = diag
        ab[2, :-1] = lower[1:]
        interior = solve_banded((1, 1), ab, rhs)
        out = np.empty(diag.size + 2)
        out[0], out[-1] = left, right
        out[1:-1] = interior
        return out

    def howard_step(self, V, p):
        """One policy iteration sweep: V-solve, then p-solve."""
        prm = self.params
        _, u, v, drift, running = self.controls_and_drift(V, p)
        reac_V = prm.r + self.rho
        src_V = self.rho * self.B + running
        V_new = self._solve_tridiagonal(reac_V, drift, src_V, 0.0, self.B)

        # refresh controls at the new V; the p-equation advects with H_xi
        _, _, v_new, drift_new, _ = self.controls_and_drift(V_new, p)
        reac_p = prm.r + prm.lam + v_new + self.rho
        src_p = (prm.r + prm.lam) + self.rho * self.theta
        p_new = self._solve_tridiagonal(reac_p, drift_new, src_p,
                                        1.0, self.p_right)
        return V_new, p_new

    def explicit_step(self, V, p, safety):
        """Pseudo-time step: explicit transport/diffusion, implicit reaction."""
        prm = self.params
        _, u, v, drift, running = self.controls_and_drift(V, p)
        D_int = self.D[1:-1]
        rate = 2.0 * D_int / self.h ** 2 + np.abs(drift[1:-1]) / self.h
        dt = safety / float(np.max(rate))

        expl_V = (self.upwind(V, drift) + D_int * self.second(V)
                  + self.rho[1:-1] * self.B + running[1:-1])
        expl_p = (self.upwind(p, drift) + D_int * self.second(p)
                  + (prm.r + prm.lam) + self.rho[1:-1] * self.theta[1:-1])
        V = V.copy()
        p = p.copy()
        V[1:-1] = (V[1:-1] + dt * expl_V) / (1.0 + dt * (prm.r + self.rho[1:-1]))
        p[1:-1] = ((p[1:-1] + dt * expl_p)
                   / (1.0 + dt * (prm.r + prm.lam + v[1:-1] + self.rho[1:-1])))
        return V, p


def _initial_fields(disc: _Discretization):
    grid = disc.grid
    V = np.linspace(0.0, disc.B, grid.n)
    p = np.linspace(1.0, disc.p_right, grid.n)
    V[0], V[-1] = 0.0, disc.B
    p[0], p[-1] = 1.0, disc.p_right
    return V, p


def _check_finite(V, p, epsilon):
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(p))):
        raise InstabilityDetected(
            f"non-finite iterate at eps={epsilon:g}", epsilon=epsilon)


def solve_regularized(params: ModelParams, costs: CostSpec, risk: RiskSpec,
                      salvage: SalvageSpec, epsilon: float, grid: Grid,
                      warm_start: Solution | None = None,
                      config: SolverConfig | None = None) -> Solution:
    """Solve the eps-regularized system on the given grid.

    Runs pseudo-time relaxation until the residual clears the Howard
    threshold (or the explicit budget is spent), then Howard policy
    iteration with residual-monitored damping.  Raises NonConvergence with
    diagnostics if the budget runs out, InstabilityDetected on NaN/Inf.
    """
    if config is None:
        config = SolverConfig(n=grid.n)
    disc = _Discretization(params, costs, risk, salvage, epsilon, grid)

    if warm_start is not None:
        if warm_start.grid.n != grid.n or warm_start.grid.x_star != grid.x_star:
            raise ValueError("warm start must live on the same grid")
        V, p = warm_start.V.copy(), warm_start.p.copy()
        V[0], V[-1] = 0.0, disc.B
        p[0], p[-1] = 1.0, disc.p_right
    else:
        V, p = _initial_fields(disc)

    tol = config.steady_state_tol
    res = disc.residual_max(V, p)
    iterations = 0

    # phase 1: damped pseudo-time stepping
    explicit_target = config.howard_threshold if config.policy_iteration else tol
    steps = 0
    while res > explicit_target and steps < config.max_explicit_steps:
        V, p = disc.explicit_step(V, p, config.pseudo_time_safety)
        steps += 1
        if steps % 25 == 0 or steps == config.max_explicit_steps:
            _check_finite(V, p, epsilon)
            res = disc.residual_max(V, p)
    iterations += steps

    # phase 2: Howard policy iteration with damping safeguards
    if config.policy_iteration:
        relax = 1.0
        strikes = 0
        it = 0
        while res > tol and it < config.max_iterations:
            V_c, p_c = disc.howard_step(V, p)
            _check_finite(V_c, p_c, epsilon)
            if relax < 1.0:
                V_c = V + relax * (V_c - V)
                p_c = p + relax * (p_c - p)
            res_c = disc.residual_max(V_c, p_c)
            if res_c <= res or res_c <= tol:
                V, p, res = V_c, p_c, res_c
                relax = min(1.0, relax * 1.5)
                strikes = 0
            else:
                relax = max(relax * 0.25, 1.0 / 64.0)
                strikes += 1
                if strikes >= 6:
                    # stall: smooth with a burst of pseudo-time steps
                    for _ in range(500):
                        V, p = disc.explicit_step(V, p, config.pseudo_time_safety)
                    _check_finite(V, p, epsilon)
                    res = disc.residual_max(V, p)
                    relax, strikes = 1.0, 0
            it += 1
        iterations += it
        # polish: ride the superlinear tail below the tolerance
        polish = 0
        while res <= tol and polish < 2:
            V_c, p_c = disc.howard_step(V, p)
            _check_finite(V_c, p_c, epsilon)
            res_c = disc.residual_max(V_c, p_c)
            if res_c >= res:
                break
            V, p, res = V_c, p_c, res_c
            polish += 1
        iterations += polish

    converged = res <= tol
    solution = _build_solution(disc, V, p, iterations, converged,
                               params, costs, risk, salvage)
    if not converged:
        raise NonConvergence(
            f"residual {res:.3e} above tol {tol:.1e} at eps={epsilon:g}",
            solution=solution, epsilon=epsilon)
    return solution


def _build_solution(disc, V, p, iterations, converged,
                    params, costs, risk, salvage) -> Solution:
    res_V, res_p = disc.residuals(V, p)
    sol = Solution(grid=disc.grid, V=V, p=p,
                   dV=_one_sided_derivative(V, disc.h),
                   dp=_one_sided_derivative(p, disc.h),
                   u_star=np.zeros_like(V), v_star=np.zeros_like(V),
                   epsilon=disc.eps, res_V=res_V, res_p=res_p,
                   iterations=iterations, converged=converged,
                   params=params, costs=costs, risk=risk, salvage=salvage)
    sol.u_star, sol.v_star = extract_feedback(sol, costs)
    return sol


def continuation_solve(params: ModelParams, costs: CostSpec, risk: RiskSpec,
                       salvage: SalvageSpec,
                       config: SolverConfig) -> tuple:
    """Solve along the eps schedule, warm-starting each level.

    Returns (final Solution, ContinuationTrace); the trace records the
    interior max-norm gap between consecutive levels on
    [0.05 x_star, 0.95 x_star], the empirical continuation error.
    """
    grid = Grid(n=config.n, x_star=params.x_star)
    xs = grid.nodes
    delta = 0.05 * params.x_star
    interior = (xs >= delta) & (xs <= params.x_star - delta)

    trace = ContinuationTrace(epsilons=list(config.epsilon_schedule))
    sol = None
    for eps in config.epsilon_schedule:
        prev = sol
        sol = solve_regularized(params, costs, risk, salvage, eps, grid,
                                warm_start=prev, config=config)
        if prev is not None:
            dV = float(np.max(np.abs(sol.V - prev.V)[interior]))
            dp = float(np.max(np.abs(sol.p - prev.p)[interior]))
            trace.entries.append({"eps_from": prev.epsilon, "eps_to": eps,
                                  "dV": dV, "dp": dp, "d_max": max(dV, dp)})
    return sol, trace


def residual(solution: Solution, params: ModelParams, costs: CostSpec,
             risk: RiskSpec, salvage: SalvageSpec) -> tuple:
    """Per-node stationary residuals of both equations (solver stencils)."""
    disc = _Discretization(params, costs, risk, salvage,
                           solution.epsilon, solution.grid)
    return disc.residuals(solution.V, solution.p)


def extract_feedback(solution: Solution, costs: CostSpec) -> tuple:
    """Feedback controls from the solved fields: u* = u~(V', p), v* = v~(x, V').

    V' uses central differences (one-sided at the right endpoint).  At x = 0
    the Dirichlet datum V(0) = 0 forces H(0, V'(0+), p(0)) = 0, which pins
    the payment channel off there; the one-sided difference cannot see that
    boundary layer (it returns the post-layer slope), so u*(0) is set from
    the boundary identity rather than the discrete slope.
    """
    dV = _one_sided_derivative(solution.V, solution.grid.h)
    xi = np.maximum(dV, 0.0)
    u = np.asarray(u_tilde(xi, np.maximum(solution.p, 1e-12), costs))
    v = np.asarray(v_tilde(solution.grid.nodes, xi, costs))
    u[0] = 0.0
    return u, v


# ---------------------------------------------------------------------------
# persistence: one JSON header line + CSV columns at 17 significant digits
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("x", "V", "dV", "p", "dp", "u_star", "v_star", "res_V", "res_p")


def save_solution(solution: Solution, path) -> None:
    """Write the solution as a JSON header line plus CSV rows."""
    header = {
        "params": solution.params.to_dict(),
        "costs": solution.costs.to_dict(),
        "risk": solution.risk.to_dict(),
        "salvage": solution.salvage.to_dict(),
        "epsilon": solution.epsilon,
        "n": solution.grid.n,
        "res_V_max": float(np.max(np.abs(solution.res_V))),
        "res_p_max": float(np.max(np.abs(solution.res_p))),
        "iterations": solution.iterations,
        "converged": solution.converged,
    }
    xs = solution.grid.nodes
    cols = (xs, solution.V, solution.dV, solution.p, solution.dp,
            solution.u_star, solution.v_star, solution.res_V, solution.res_p)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")


def load_solution(path) -> Solution:
    """Read a solution written by save_solution (numeric columns bit-exact)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        names = fh.readline().strip().split(",")
        if tuple(names) != _CSV_COLUMNS:
            raise ValueError(f"unexpected solution columns: {names}")
        data = np.loadtxt(fh, delimiter=",").reshape(-1, len(_CSV_COLUMNS))
    params = ModelParams.from_dict(header["params"])
    costs = CostSpec.from_dict(header["costs"])
    risk = RiskSpec.from_dict(header["risk"])
    salvage = SalvageSpec.from_dict(header["salvage"])
    grid = Grid(n=int(header["n"]), x_star=params.x_star)
    cols = {name: data[:, i].copy() for i, name in enumerate(_CSV_COLUMNS)}
    return Solution(grid=grid, V=cols["V"], p=cols["p"], dV=cols["dV"],
                    dp=cols["dp"], u_star=cols["u_star"], v_star=cols["v_star"],
                    epsilon=float(header["epsilon"]),
                    res_V=cols["res_V"], res_p=cols["res_p"],
                    iterations=int(header["iterations"]),
                    converged=bool(header["converged"]),
                    params=params, costs=costs, risk=risk, salvage=salvage)
