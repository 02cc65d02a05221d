"""Monte Carlo simulation of the controlled debt ratio with hazard default.

Simulates the Euler-Maruyama discretization of

    dx = [((lam+r)/p - lam + sigma^2 - mu - v) x - u/p] dt - sigma x dW

under a sampled feedback policy (u*, v*, p), with two bankruptcy channels:
threshold absorption at x_star, and hazard default when the running
trapezoidal integral of rho along the path first exceeds a unit-exponential
draw (integrated-hazard inversion: exact in distribution given the path, no
per-step Bernoulli bias; the crossing time is interpolated inside the step).

Randomness is stateless and counter-based: draw (path i, step s) comes from
a SplitMix64 stream keyed by (root seed, i) and indexed by s, pushed through
a 128-layer ziggurat for normals.  Every path is therefore bit-reproducible
in isolation, in any batch split, and under any parallel schedule;
aggregation uses exact summation in path index order.  Built-in model
families run in a compiled per-path kernel; custom families fall back to a
vectorized lockstep loop drawing from the same streams.

Per-step integrals of e^{-rt} and the bond discount use the closed-form
primitive with controls frozen at the left endpoint, so the bond payoff
telescopes: theta = 1 with v_max = 0 yields payoff 1 on every path to a few
ulps (compensated accumulation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy import stats

from .model import CostSpec, ModelParams, RiskSpec, SalvageSpec
from .solver import Solution

__all__ = [
    "FeedbackPolicy",
    "SimConfig",
    "PathOutcome",
    "McEstimate",
    "Perturbation",
    "default_horizon",
    "simulate_path",
    "simulate_paths",
    "estimate_value",
    "estimate_bond_price",
    "estimate_both",
    "deviation_test",
    "bankruptcy_times_ks",
    "sample_normal_stream",
]

_CAUSES = ("hazard", "threshold", "truncated")
# multiplicative decay toward the invariant zero state stalls on subnormals,
# so absorption triggers below a physically negligible threshold instead of
# at exactly 0 (every future contribution from such a state is O(x))
_FREEZE_X = 1e-250

# ---------------------------------------------------------------------------
# stateless counter-based RNG: SplitMix64 streams + ziggurat normals
# ---------------------------------------------------------------------------

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SUBC = np.uint64(0xD1B54A32D192ED03)   # sub-counter stride for rejection draws
_PATHC = np.uint64(0x2545F4914F6CDD1D)  # path stride for stream keys
_ZIG_R = 3.442619855899                 # ziggurat tail start


def _build_ziggurat():
    """128-layer ziggurat tables for the standard normal (53-bit mantissa)."""
    m = float(1 << 53)
    dn = _ZIG_R
    tn = dn
    vn = 9.91256303526217e-3
    q = vn / math.exp(-0.5 * dn * dn)
    kn = np.zeros(128, dtype=np.uint64)
    wn = np.zeros(128)
    fn = np.zeros(128)
    kn[0] = np.uint64((dn / q) * m)
    kn[1] = np.uint64(0)
    wn[0] = q / m
    wn[127] = dn / m
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = np.uint64((dn / tn) * m)
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m
    return kn, wn, fn


_ZIG_KN, _ZIG_WN, _ZIG_FN = _build_ziggurat()


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _path_base(seed, index):
    return _mix64(_mix64(seed) + (np.uint64(index) + np.uint64(1)) * _PATHC)


@njit(cache=True, inline="always")
def _u64(base, slot, sub):
    return _mix64(base + np.uint64(slot) * _GOLD + np.uint64(sub) * _SUBC)


@njit(cache=True, inline="always")
def _unit(u):
    """Map a uint64 to (0, 1), both endpoints excluded."""
    return (np.float64(u >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16


@njit(cache=True)
def _zig_normal(base, slot):
    """Standard normal draw for stream position (base, slot)."""
    sub = 0
    while True:
        u = _u64(base, slot, sub)
        sub += 1
        iz = u >> np.uint64(11)
        idx = np.int64(u & np.uint64(127))
        sign = -1.0 if (u >> np.uint64(7)) & np.uint64(1) else 1.0
        x = np.float64(iz) * _ZIG_WN[idx]
        if iz < _ZIG_KN[idx]:
            return sign * x
        if idx == 0:    # tail beyond the base strip
            while True:
                xx = -math.log(_unit(_u64(base, slot, sub))) / _ZIG_R
                sub += 1
                yy = -math.log(_unit(_u64(base, slot, sub)))
                sub += 1
                if yy + yy > xx * xx:
                    return sign * (_ZIG_R + xx)
        else:
            f = _ZIG_FN[idx] + _unit(_u64(base, slot, sub)) * (
                _ZIG_FN[idx - 1] - _ZIG_FN[idx])
            sub += 1
            if f < math.exp(-0.5 * x * x):
                return sign * x


@njit(cache=True, inline="always")
def _exp_draw(base):
    """Unit-exponential hazard threshold: stream slot 0."""
    return -math.log(_unit(_u64(base, 0, 0)))


@njit(cache=True)
def _normals_at(bases, slot, out):
    for j in range(bases.size):
        out[j] = _zig_normal(bases[j], slot)


@njit(cache=True)
def _exp_draws(bases, out):
    for j in range(bases.size):
        out[j] = _exp_draw(bases[j])


@njit(cache=True)
def _stream_sample(seed, index, n, out):
    base = _path_base(np.uint64(seed), np.int64(index))
    for s in range(n):
        out[s] = _zig_normal(base, s + 1)


def sample_normal_stream(seed: int, path_index: int, n: int) -> np.ndarray:
    """The first n Gaussian increments of one path's stream (for validation)."""
    out = np.empty(n)
    _stream_sample(seed & (2 ** 64 - 1), path_index, n, out)
    return out


# ---------------------------------------------------------------------------
# policy, configuration, outcome containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackPolicy:
    """Sampled feedback (u*, v*) and bond price p on a uniform grid."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        dx = np.diff(self.x)
        if dx.size == 0 or not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
            raise ValueError("feedback grid must be uniform")

    @classmethod
    def from_solution(cls, solution: Solution) -> "FeedbackPolicy":
        return cls(x=solution.grid.nodes.copy(), u=solution.u_star.copy(),
                   v=solution.v_star.copy(), p=solution.p.copy())

    @classmethod
    def constant(cls, x_star, u=0.0, v=0.0, p=1.0) -> "FeedbackPolicy":
        xs = np.array([0.0, float(x_star)])
        return cls(x=xs, u=np.full(2, float(u)), v=np.full(2, float(v)),
                   p=np.full(2, float(p)))

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    def running_cost_bound(self, costs: CostSpec) -> float:
        """Upper bound on L(u*) + c(v*) along the sampled feedback."""
        bound = float(costs.L(min(float(np.max(self.u)), 1.0 - 1e-12)))
        if costs.v_max > 0:
            vm = min(float(np.max(self.v)), costs.v_max * (1 - 1e-12))
            bound += float(costs.c(vm))
        return bound


@dataclass(frozen=True)
class SimConfig:
    """Time step, truncation horizon, path count and root seed."""

    dt: float = 1e-3
    horizon: float | None = None     # None: resolved by default_horizon
    n_paths: int = 10_000
    seed: int = 0
    x0: float = 0.5
    salvage_at_state: bool = True    # theta(x(T_B)); False: literal theta(x_star)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class PathOutcome:
    """One simulated trajectory's bankruptcy data and discounted payoffs."""

    bankruptcy_time: float
    cause: str                  # hazard | threshold | truncated
    discounted_cost: float
    bond_payoff: float
    final_x: float


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with standard error and the truncation bias bound."""

    mean: float
    standard_error: float
    n_paths: int
    truncation_bias_bound: float
    horizon: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "standard_error": self.standard_error,
                "n_paths": self.n_paths,
                "truncation_bias_bound": self.truncation_bias_bound,
                "horizon": self.horizon}


@dataclass(frozen=True)
class Perturbation:
    """Additive bump of one control on a sub-interval, clamped to its range."""

    target: str          # "u" or "v"
    delta: float
    lo: float
    hi: float

    def apply(self, feedback: FeedbackPolicy, v_max: float) -> FeedbackPolicy:
        if self.target not in ("u", "v"):
            raise ValueError("perturbation target must be 'u' or 'v'")
        mask = (feedback.x >= self.lo) & (feedback.x <= self.hi)
        if self.target == "u":
            u = feedback.u.copy()
            u[mask] = np.clip(u[mask] + self.delta, 0.0, 1.0 - 1e-9)
            return replace(feedback, u=u)
        v = feedback.v.copy()
        cap = v_max * (1 - 1e-9) if v_max > 0 else 0.0
        v[mask] = np.clip(v[mask] + self.delta, 0.0, cap)
        return replace(feedback, v=v)


def default_horizon(params: ModelParams, feedback: FeedbackPolicy,
                    costs: CostSpec) -> float:
    """Truncation time making the discounted tail ~0.1% of the B scale."""
    c_run = feedback.running_cost_bound(costs)
    r, B = params.r, params.B
    if B > 0:
        return math.log((c_run / r + B) / (1e-3 * B)) / r
    return math.log(1e3 * (1.0 + c_run / r)) / r


# ---------------------------------------------------------------------------
# compiled per-path kernel (built-in families)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _rho_barrier(x, x_star, kappa, q):
    d = x_star - x
    if q == 0.5:
        return kappa * x / math.sqrt(d)
    if q == 1.0:
        return kappa * x / d
    if q == 2.0:
        return kappa * x / (d * d)
    if q == 3.0:
        return kappa * x / (d * d * d)
    return kappa * x * d ** (-q)


@njit(cache=True, inline="always")
def _kahan(acc, comp, term):
    y = term - comp
    t = acc + y
    return t, (t - acc) - y


@njit(cache=True)
def _kernel_builtin(indices, seed, x0, dt, horizon, n_steps,
                    fb_u, fb_v, fb_p, inv_fb_h, n_fb,
                    r, lam, mu, sigma, v_max, B, x_star,
                    alpha_L, alpha_c, kappa, q, m_salv,
                    salvage_at_state,
                    out_time, out_cause, out_cost, out_payoff, out_final):
    """Sequential per-path simulation; one pass per path, no shared state."""
    sig2 = sigma * sigma
    sqrt_dt = math.sqrt(dt)
    h_last = horizon - (n_steps - 1) * dt
    sqrt_h_last = math.sqrt(h_last)
    factor_r = math.exp(-r * dt)
    factor_rl = math.exp(-(r + lam) * dt)
    rho_clip = x_star * (1.0 - 1e-8)
    rho0 = _rho_barrier(min(x0, rho_clip), x_star, kappa, q)
    # x = 0 is invariant with zero cost and zero hazard whenever the policy
    # is idle there; such paths keep only the closed-form bond tail
    can_freeze = fb_u[0] == 0.0 and (v_max == 0.0 or fb_v[0] == 0.0)

    for j in range(indices.size):
        base = _path_base(seed, indices[j])
        E = _exp_draw(base)

        x = x0
        I_haz = 0.0
        rho_prev = rho0
        disc = 1.0
        expA = 1.0
        cost = 0.0
        cost_c = 0.0
        payoff = 0.0
        payoff_c = 0.0
        t = 0.0
        died = False

        for s in range(n_steps):
            if x < _FREEZE_X and can_freeze:
                tail = expA * (1.0 - math.exp(-(r + lam) * (horizon - t)))
                payoff, payoff_c = _kahan(payoff, payoff_c, tail)
                break
            last = s == n_steps - 1
            h = h_last if last else dt
            z = _zig_normal(base, s + 1)

            pos = x * inv_fb_h
            if pos < 0.0:
                pos = 0.0
            if pos > n_fb - 1.000001:
                pos = n_fb - 1.000001
            i0 = int(pos)
            w = pos - i0
            u = fb_u[i0] + w * (fb_u[i0 + 1] - fb_u[i0])
            if u < 0.0:
                u = 0.0
            elif u > 1.0 - 1e-12:
                u = 1.0 - 1e-12
            if v_max > 0.0:
                v = fb_v[i0] + w * (fb_v[i0 + 1] - fb_v[i0])
                if v < 0.0:
                    v = 0.0
                elif v > v_max * (1.0 - 1e-12):
                    v = v_max * (1.0 - 1e-12)
            else:
                v = 0.0
            p = fb_p[i0] + w * (fb_p[i0 + 1] - fb_p[i0])
            if p < 1e-9:
                p = 1e-9

            run = alpha_L * u + u * u / (1.0 - u)
            if v > 0.0:
                run += alpha_c * v + v * v / (v_max - v)

            drift = ((lam + r) / p - lam + sig2 - mu - v) * x - u / p
            sqh = sqrt_h_last if last else sqrt_dt
            x_prop = x + drift * h - sigma * x * sqh * z
            hit_threshold = x_prop >= x_star
            x_new = x_prop
            if x_new < 0.0:
                x_new = 0.0
            elif x_new > x_star:
                x_new = x_star

            rx = x_new if x_new < rho_clip else rho_clip
            rho_new = _rho_barrier(rx, x_star, kappa, q)
            I_new = I_haz + 0.5 * h * (rho_prev + rho_new)
            hit_hazard = I_new >= E

            decay = r + lam + v
            if last:
                disc_new = disc * math.exp(-r * h)
                expA_new = expA * math.exp(-decay * h)
            else:
                disc_new = disc * factor_r
                expA_new = (expA * factor_rl if v == 0.0
                            else expA * math.exp(-decay * h))

            if hit_hazard or hit_threshold:
                if hit_hazard:
                    frac = (E - I_haz) / (I_new - I_haz)
                    t_die = t + frac * h
                    disc_die = disc * math.exp(-r * frac * h)
                    x_die = x + frac * (x_new - x)
                    expA_die = expA * math.exp(-decay * frac * h)
                    out_cause[j] = 0
                else:
                    t_die = t + h
                    disc_die = disc_new
                    x_die = x_star
                    expA_die = expA_new
                    out_cause[j] = 1
                cost, cost_c = _kahan(cost, cost_c,
                                      run * (disc - disc_die) / r)
                cost, cost_c = _kahan(cost, cost_c, disc_die * B)
                payoff, payoff_c = _kahan(payoff, payoff_c,
                                          (lam + r) / decay * (expA - expA_die))
                x_sal = x_die if salvage_at_state else x_star
                theta_val = 1.0 - m_salv * x_sal / x_star
                payoff, payoff_c = _kahan(payoff, payoff_c,
                                          expA_die * theta_val)
                out_time[j] = t_die
                out_cost[j] = cost
                out_payoff[j] = payoff
                out_final[j] = x_die
                died = True
                break

            cost, cost_c = _kahan(cost, cost_c, run * (disc - disc_new) / r)
            payoff, payoff_c = _kahan(payoff, payoff_c,
                                      (lam + r) / decay * (expA - expA_new))
            x = x_new
            I_haz = I_new
            rho_prev = rho_new
            disc = disc_new
            expA = expA_new
            t = t + h

        if not died:
            out_time[j] = horizon
            out_cause[j] = 2
            out_cost[j] = cost
            out_payoff[j] = payoff
            out_final[j] = x


# ---------------------------------------------------------------------------
# lockstep fallback for custom model families (same RNG streams)
# ---------------------------------------------------------------------------

def _simulate_lockstep(x0, feedback, params, costs, risk, salvage, sim,
                       indices, horizon, out):
    """Vectorized lockstep simulation; handles arbitrary python families."""
    n = indices.size
    r, lam, mu, sigma = params.r, params.lam, params.mu, params.sigma
    sig2, x_star, B = sigma ** 2, params.x_star, params.B
    rho_clip = x_star * (1.0 - 1e-8)
    theta_star = salvage.theta_at_x_star()

    bases = np.array([_path_base(np.uint64(sim.seed & (2 ** 64 - 1)),
                                 np.int64(i)) for i in indices],
                     dtype=np.uint64)
    E = np.empty(n)
    _exp_draws(bases, E)

    alive = np.arange(n)
    x = np.full(n, float(x0))
    I_haz = np.zeros(n)
    rho_prev = np.full(n, float(risk.rho(min(x0, rho_clip))))
    A = np.zeros(n)
    expA = np.ones(n)
    cost = np.zeros(n)
    cost_c = np.zeros(n)
    payoff = np.zeros(n)
    payoff_c = np.zeros(n)

    can_freeze = (feedback.u[0] == 0.0
                  and (costs.v_max == 0.0 or feedback.v[0] == 0.0)
                  and float(risk.rho(0.0)) == 0.0)
    n_steps = int(math.ceil(horizon / sim.dt - 1e-12))
    t = 0.0
    disc_t = 1.0
    for step in range(n_steps):
        if alive.size == 0:
            break
        if can_freeze:
            frz = np.flatnonzero(x < _FREEZE_X)
            if frz.size:     # invariant zero state: closed-form bond tail
                tail = expA[frz] * (1.0 - math.exp(-(r + lam) * (horizon - t)))
                _vec_kahan(payoff, payoff_c, tail, frz)
                gi = alive[frz]
                out["discounted_cost"][gi] = cost[frz]
                out["bond_payoff"][gi] = payoff[frz]
                out["final_x"][gi] = x[frz]
                keep = x >= _FREEZE_X
                alive = alive[keep]
                x = x[keep]
                I_haz = I_haz[keep]
                rho_prev = rho_prev[keep]
                A = A[keep]
                expA = expA[keep]
                cost, cost_c = cost[keep], cost_c[keep]
                payoff, payoff_c = payoff[keep], payoff_c[keep]
                if alive.size == 0:
                    break
        h = min(sim.dt, horizon - t)
        z_alive = np.empty(alive.size)
        _normals_at(bases[alive], step + 1, z_alive)

        u = np.clip(np.interp(x, feedback.x, feedback.u), 0.0, 1.0 - 1e-12)
        if costs.v_max > 0:
            v = np.clip(np.interp(x, feedback.x, feedback.v), 0.0,
                        costs.v_max * (1 - 1e-12))
        else:
            v = np.zeros_like(x)
        p = np.maximum(np.interp(x, feedback.x, feedback.p), 1e-9)
        run = np.asarray(costs.L(u))
        if costs.v_max > 0:
            run = run + np.asarray(costs.c(v))

        drift = ((lam + r) / p - lam + sig2 - mu - v) * x - u / p
        x_prop = x + drift * h - sigma * x * math.sqrt(h) * z_alive
        x_new = np.clip(x_prop, 0.0, x_star)
        hit_threshold = x_prop >= x_star

        rho_new = np.asarray(risk.rho(np.minimum(x_new, rho_clip)))
        I_new = I_haz + 0.5 * h * (rho_prev + rho_new)
        hit_hazard = I_new >= E[alive]

        t_next = t + h
        disc_next = math.exp(-r * t_next)
        decay = r + lam + v
        A_new = A + h * decay
        expA_new = np.exp(-A_new)

        survivors = ~(hit_hazard | hit_threshold)
        sv = np.flatnonzero(survivors)
        if sv.size:
            _vec_kahan(cost, cost_c, run[sv] * (disc_t - disc_next) / r, sv)
            _vec_kahan(payoff, payoff_c,
                       (lam + r) / decay[sv] * (expA[sv] - expA_new[sv]), sv)

        dying = np.flatnonzero(~survivors)
        if dying.size:
            haz = hit_hazard[dying]
            frac = np.ones(dying.size)
            gap = I_new[dying] - I_haz[dying]
            frac[haz] = ((E[alive[dying]] - I_haz[dying])[haz]
                         / np.maximum(gap[haz], 1e-300))
            t_die = t + frac * h
            disc_die = np.exp(-r * t_die)
            x_die = np.where(haz, x[dying] + frac * (x_new[dying] - x[dying]),
                             x_star)
            expA_die = np.exp(-(A[dying] + frac * h * decay[dying]))

            _vec_kahan(cost, cost_c, run[dying] * (disc_t - disc_die) / r,
                       dying)
            _vec_kahan(cost, cost_c, disc_die * B, dying)
            _vec_kahan(payoff, payoff_c,
                       (lam + r) / decay[dying] * (expA[dying] - expA_die),
                       dying)
            if sim.salvage_at_state:
                sal = np.asarray(salvage.theta(np.minimum(x_die, x_star)))
            else:
                sal = np.full(dying.size, theta_star)
            _vec_kahan(payoff, payoff_c, expA_die * sal, dying)

            gi = alive[dying]
            out["bankruptcy_time"][gi] = t_die
            out["cause"][gi] = np.where(haz, 0, 1)
            out["discounted_cost"][gi] = cost[dying]
            out["bond_payoff"][gi] = payoff[dying]
            out["final_x"][gi] = x_die

        keep = survivors
        alive = alive[keep]
        x = x_new[keep]
        I_haz = I_new[keep]
        rho_prev = rho_new[keep]
        A = A_new[keep]
        expA = expA_new[keep]
        cost, cost_c = cost[keep], cost_c[keep]
        payoff, payoff_c = payoff[keep], payoff_c[keep]
        t = t_next
        disc_t = disc_next

    if alive.size:
        out["discounted_cost"][alive] = cost
        out["bond_payoff"][alive] = payoff
        out["final_x"][alive] = x


def _vec_kahan(acc, comp, term, idx):
    y = term - comp[idx]
    t = acc[idx] + y
    comp[idx] = (t - acc[idx]) - y
    acc[idx] = t


# ---------------------------------------------------------------------------
# public simulation entry points
# ---------------------------------------------------------------------------

def simulate_paths(x0: float, feedback: FeedbackPolicy, params: ModelParams,
                   costs: CostSpec, risk: RiskSpec, salvage: SalvageSpec,
                   sim: SimConfig, path_indices=None) -> dict:
    """Simulate paths for the given indices; returns column arrays.

    Columns (bankruptcy_time, cause code, discounted_cost, bond_payoff,
    final_x) are indexed like path_indices.  Each path index owns a fixed
    stream keyed by (seed, index), so results do not depend on how paths
    are batched.
    """
    if not 0.0 <= x0 <= params.x_star:
        raise ValueError("x0 must lie in [0, x_star]")
    if path_indices is None:
        path_indices = np.arange(sim.n_paths)
    indices = np.asarray(path_indices, dtype=np.int64)
    n = indices.size
    horizon = sim.horizon if sim.horizon is not None else default_horizon(
        params, feedback, costs)

    out = {"bankruptcy_time": np.full(n, horizon),
           "cause": np.full(n, 2, dtype=np.uint8),
           "discounted_cost": np.zeros(n),
           "bond_payoff": np.zeros(n),
           "final_x": np.full(n, float(x0))}

    if x0 >= params.x_star:    # immediate threshold absorption
        out["bankruptcy_time"][:] = 0.0
        out["cause"][:] = 1
        out["discounted_cost"][:] = params.B
        out["bond_payoff"][:] = salvage.theta_at_x_star()
        out["final_x"][:] = params.x_star
        return out

    n_steps = int(math.ceil(horizon / sim.dt - 1e-12))
    fast = (risk.family == "barrier" and salvage.family == "linear"
            and costs.family == "barrier")
    if fast:
        _kernel_builtin(
            indices, np.uint64(sim.seed & (2 ** 64 - 1)), float(x0),
            float(sim.dt), float(horizon), n_steps,
            feedback.u, feedback.v, feedback.p,
            1.0 / feedback.spacing, feedback.x.size,
            params.r, params.lam, params.mu, params.sigma, params.v_max,
            params.B, params.x_star, costs.alpha_L, costs.alpha_c,
            risk.kappa, risk.q, salvage.m, sim.salvage_at_state,
            out["bankruptcy_time"], out["cause"], out["discounted_cost"],
            out["bond_payoff"], out["final_x"])
    else:
        _simulate_lockstep(x0, feedback, params, costs, risk, salvage, sim,
                           indices, horizon, out)
    return out


def simulate_path(x0: float, feedback: FeedbackPolicy, params: ModelParams,
                  costs: CostSpec, risk: RiskSpec, salvage: SalvageSpec,
                  sim: SimConfig, path_index: int) -> PathOutcome:
    """Simulate a single path; identical to the same index inside a batch."""
    cols = simulate_paths(x0, feedback, params, costs, risk, salvage, sim,
                          path_indices=np.array([path_index]))
    return PathOutcome(
        bankruptcy_time=float(cols["bankruptcy_time"][0]),
        cause=_CAUSES[int(cols["cause"][0])],
        discounted_cost=float(cols["discounted_cost"][0]),
        bond_payoff=float(cols["bond_payoff"][0]),
        final_x=float(cols["final_x"][0]))


def _mean_se(values: np.ndarray) -> tuple:
    """Exact-summation mean and standard error in path order."""
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def _estimates_from(cols, x0, feedback, params, costs, sim) -> tuple:
    horizon = sim.horizon if sim.horizon is not None else default_horizon(
        params, feedback, costs)
    c_run = feedback.running_cost_bound(costs)
    mean_J, se_J = _mean_se(cols["discounted_cost"])
    bias_J = math.exp(-params.r * horizon) * (c_run / params.r + params.B)
    mean_p, se_p = _mean_se(cols["bond_payoff"])
    bias_p = math.exp(-(params.r + params.lam) * horizon)
    n = cols["discounted_cost"].size
    return (McEstimate(mean_J, se_J, n, bias_J, horizon),
            McEstimate(mean_p, se_p, n, bias_p, horizon))


def estimate_both(x0: float, feedback: FeedbackPolicy, params: ModelParams,
                  costs: CostSpec, risk: RiskSpec, salvage: SalvageSpec,
                  sim: SimConfig) -> tuple:
    """Cost and bond estimates from one shared batch of paths."""
    cols = simulate_paths(x0, feedback, params, costs, risk, salvage, sim)
    return _estimates_from(cols, x0, feedback, params, costs, sim)


def estimate_value(x0: float, feedback: FeedbackPolicy, params: ModelParams,
                   costs: CostSpec, risk: RiskSpec, salvage: SalvageSpec,
                   sim: SimConfig) -> McEstimate:
    """Mean discounted borrower cost over independent paths."""
    return estimate_both(x0, feedback, params, costs, risk, salvage, sim)[0]


def estimate_bond_price(x0: float, feedback: FeedbackPolicy,
                        params: ModelParams, costs: CostSpec, risk: RiskSpec,
                        salvage: SalvageSpec, sim: SimConfig) -> McEstimate:
    """Mean realized bond payoff over independent paths."""
    return estimate_both(x0, feedback, params, costs, risk, salvage, sim)[1]


def deviation_test(x0: float, feedback: FeedbackPolicy,
                   perturbation: Perturbation, params: ModelParams,
                   costs: CostSpec, risk: RiskSpec, salvage: SalvageSpec,
                   sim: SimConfig, base_columns: dict | None = None) -> tuple:
    """Paired cost difference J(perturbed) - J(feedback) under common draws.

    Returns (delta_cost, paired standard error).  Optimality of the
    feedback predicts delta_cost >= -3 SE minus a discretization allowance.
    base_columns, when given, must come from simulate_paths with identical
    arguments; it lets several perturbations share one base run.
    """
    if base_columns is None:
        base_columns = simulate_paths(x0, feedback, params, costs, risk,
                                      salvage, sim)
    bumped = perturbation.apply(feedback, costs.v_max)
    pert = simulate_paths(x0, bumped, params, costs, risk, salvage, sim)
    diff = pert["discounted_cost"] - base_columns["discounted_cost"]
    return _mean_se(diff)


def bankruptcy_times_ks(times: np.ndarray, rate: float) -> tuple:
    """Kolmogorov-Smirnov statistic and p-value against Exp(rate)."""
    res = stats.kstest(times, "expon", args=(0.0, 1.0 / rate))
    return float(res.statistic), float(res.pvalue)
