"""Certified constants, bound curves and verification of solved systems.

Computes every explicitly available constant of the model (theta_min, K1,
x1, M1, the gradient bound M* in log space, the price-subsolution
parameters gamma, k, x_bar0), the bound curves (supersolution V1,
subsolution V2 past x_diamond, price subsolution p_minus on [0, x_bar0]),
the risk accumulation function beta and its integral bound beta_star,
classifies the near-threshold control regime, and checks a computed
Solution against all applicable certificates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .hamiltonian import bound_K1, theta_min as _theta_min
from .model import CostSpec, ModelParams, RiskSpec, SalvageSpec
from .solver import Solution

__all__ = [
    "BoundsReport",
    "RegimeClassification",
    "VerificationItem",
    "VerificationReport",
    "compute_constants",
    "compute_beta",
    "compute_beta_star",
    "supersolution_V1",
    "supersolution_V1_curve",
    "subsolution_V2",
    "find_x_diamond",
    "subsolution_p_minus",
    "classify_regime",
    "verify_solution",
]

DIVERGENT = math.inf           # beta_star marker for a non-integrable risk
_QUAD_CAP = 1e12               # quadrature values beyond this count as divergent


def _finite_or_str(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "divergent" if v > 0 else "-inf"
    return v


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsReport:
    """Every certified constant plus the parameters of the bound curves.

    M*, k and x_bar0 can overflow or underflow doubles for realistic
    parameters, so their logarithms are the primary representation; the
    linear fields are exp() of those and may round to inf or 0.
    """

    theta_min: float
    K1: float
    x1: float               # min{1/(6(lam+r+sigma^2)), x_star/2}
    M1: float               # 8(L(1/2) + rho(x1) B)
    log_M_star: float       # log of the uniform bound on V'
    gamma: float            # price subsolution exponent, in (0, 1]
    log_k: float            # log of the subsolution coefficient
    log_x_bar0: float       # log of the subsolution domain edge
    beta_star: float        # integral risk bound; inf when divergent
    C1: float               # lam + mu + v_max
    salvage_lipschitz: float
    v_dead_zone: float      # certified no-devaluation radius c'(0)/M*

    @property
    def M_star(self) -> float:
        return math.exp(self.log_M_star)

    @property
    def k(self) -> float:
        return 0.0 if self.log_k == -math.inf else math.exp(self.log_k)

    @property
    def x_bar0(self) -> float:
        return math.exp(self.log_x_bar0)

    def to_dict(self) -> dict:
        return {
            "theta_min": self.theta_min, "K1": self.K1, "x1": self.x1,
            "M1": self.M1, "log_M_star": self.log_M_star,
            "gamma": self.gamma, "k": _finite_or_str(self.k),
            "log_k": _finite_or_str(self.log_k),
            "x_bar0": self.x_bar0,
            "log_x_bar0": _finite_or_str(self.log_x_bar0),
            "beta_star": _finite_or_str(self.beta_star),
            "v_dead_zone": self.v_dead_zone, "C1": self.C1,
            "salvage_lipschitz": self.salvage_lipschitz,
        }


def compute_constants(params: ModelParams, costs: CostSpec, risk: RiskSpec,
                      salvage: SalvageSpec) -> BoundsReport:
    """Evaluate all explicit constants of the a-priori estimates.

    The three-term maximum defining M* is taken in log space.  x_bar0
    combines the certified dead zone c'(0)/M*, x_star/2 and the salvage
    margin (1-theta_min)/M; with v_max = 0 the dead-zone clause is vacuous
    (devaluation never happens), and with theta_min = 1 the price
    subsolution degenerates to p_minus = 1 on [0, x_star/2].
    """
    lam, r, sig2, xs, B = params.lam, params.r, params.sigma ** 2, params.x_star, params.B
    tm = _theta_min(params, salvage)
    K1 = bound_K1(params, tm)

    x1 = min(1.0 / (6.0 * (lam + r + sig2)), xs / 2.0)
    M1 = 8.0 * (costs.L(0.5) + risk.rho(x1) * B)

    denom = sig2 * x1 * x1
    with np.errstate(divide="ignore"):
        t2 = (1.5 * K1 * xs / denom
              + math.log(4.0 * B / xs + (B / K1) * risk.rho(0.75 * xs))
              if B > 0 else -math.inf)
        t3 = (2.0 * K1 * xs / denom + math.log(4.0 * B / xs + r * B / K1)
              if B > 0 else -math.inf)
    log_M_star = max(math.log(M1), t2, t3)

    gamma = min(1.0, (r + lam) / ((lam + r) / tm + sig2))
    M = salvage.lipschitz_bound()

    terms = [math.log(xs / 2.0)]
    if costs.v_max > 0:
        terms.append((math.log(costs.alpha_c) if costs.alpha_c > 0
                      else -math.inf) - log_M_star)
    if tm < 1.0 and M > 0:
        terms.append(math.log((1.0 - tm) / M))
    log_x_bar0 = min(terms) if tm < 1.0 else math.log(xs / 2.0)
    log_k = (math.log(1.0 - tm) - gamma * log_x_bar0 if tm < 1.0
             else -math.inf)

    if costs.v_max > 0:
        vdz = (math.exp(math.log(costs.alpha_c) - log_M_star)
               if costs.alpha_c > 0 else 0.0)
    else:
        vdz = xs  # no devaluation channel: dead zone is the whole domain
    return BoundsReport(
        theta_min=tm, K1=K1, x1=x1, M1=M1, log_M_star=log_M_star,
        gamma=gamma, log_k=log_k, log_x_bar0=log_x_bar0,
        beta_star=compute_beta_star(params, risk, salvage),
        C1=lam + params.mu + params.v_max, salvage_lipschitz=M,
        v_dead_zone=vdz)


# ---------------------------------------------------------------------------
# beta and beta_star
# ---------------------------------------------------------------------------

def _beta_constant(params: ModelParams, salvage: SalvageSpec) -> float:
    tm = _theta_min(params, salvage)
    return (params.lam + params.r) / tm + 0.5 * params.sigma ** 2


def compute_beta(params: ModelParams, risk: RiskSpec, salvage: SalvageSpec,
                 t: float, n_scan: int = 10_000) -> float:
    """Risk accumulation bound beta(t) = max_s rho(s) ln(t/s) + constant.

    The inner maximum over s in (0, t] runs a grid scan refined by a
    bounded golden/Brent search; beta(0) is the additive constant alone.
    """
    const = _beta_constant(params, salvage)
    if t <= 0.0:
        return const
    if t >= params.x_star:
        raise ValueError("beta is defined on [0, x_star)")
    ss = t * np.linspace(1.0 / n_scan, 1.0, n_scan)
    vals = np.asarray(risk.rho(ss)) * np.log(t / ss)
    j = int(np.argmax(vals))
    lo = ss[max(j - 1, 0)]
    hi = ss[min(j + 1, n_scan - 1)]
    best = float(vals[j])
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda s: -float(risk.rho(s)) * math.log(t / s),
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-8 * t})
        best = max(best, -float(res.fun))
    return max(best, 0.0) + const


def _beta_table(params, risk, salvage, ts, n_scan=10_000, block=256):
    """Vectorized beta over a t-grid via the shared line envelope.

    g(t; s) = rho(s)(ln t - ln s) is affine in ln t for fixed s, so the
    maximum over a common s-grid is an upper envelope of lines, evaluated
    here in blocks of t.
    """
    const = _beta_constant(params, salvage)
    ss = params.x_star * np.linspace(1e-300, 1.0 - 1e-9, n_scan)
    ss = np.maximum(ss, 1e-300)
    rho = np.asarray(risk.rho(ss))
    ls = np.log(ss)
    out = np.empty(ts.size)
    Lt = np.log(ts)
    for start in range(0, ts.size, block):
        sl = slice(start, min(start + block, ts.size))
        g = rho[None, :] * (Lt[sl, None] - ls[None, :])
        g[ss[None, :] > ts[sl, None]] = -np.inf
        out[sl] = np.max(g, axis=1)
    return np.maximum(out, 0.0) + const


def compute_beta_star(params: ModelParams, risk: RiskSpec,
                      salvage: SalvageSpec) -> float:
    """Integral bound beta* = int_0^{x*} rho(t)/t dt + constant, or inf.

    For the built-in family divergence is decided in closed form (q >= 1);
    otherwise adaptive quadrature with the integrable endpoint singularity,
    declared divergent beyond a 1e12 cap.
    """
    const = _beta_constant(params, salvage)
    if risk.family == "barrier" and risk.q >= 1.0:
        return DIVERGENT

    def integrand(t):
        if t <= 0.0:
            return float(risk.rho_prime(0.0))
        return float(risk.rho(t)) / t

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, 0.0, params.x_star, limit=400)
        except Exception:
            return DIVERGENT
    if not math.isfinite(val) or val > _QUAD_CAP:
        return DIVERGENT
    return val + const


# ---------------------------------------------------------------------------
# bound curves
# ---------------------------------------------------------------------------

def supersolution_V1(params: ModelParams, risk: RiskSpec, salvage: SalvageSpec,
                     x: float, n_scan: int = 1000) -> float:
    """Upper bound V1(x) = B inf_t beta(t) / (r ln(t/x) + beta(t)).

    The infimum over t in [x, x_star) runs on a log-spaced grid with a
    bounded refinement around the best candidate.
    """
    if not 0.0 < x < params.x_star:
        raise ValueError("V1 is defined on (0, x_star)")
    B, r = params.B, params.r
    ts = np.geomspace(x, params.x_star * (1.0 - 1e-9), n_scan)
    betas = np.array([compute_beta(params, risk, salvage, t) for t in ts])
    ratios = betas / (r * np.log(ts / x) + betas)
    j = int(np.argmin(ratios))
    best = float(ratios[j])
    lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, n_scan - 1)]
    if hi > lo:
        def ratio(t):
            b = compute_beta(params, risk, salvage, t)
            return b / (r * math.log(t / x) + b)
        res = optimize.minimize_scalar(ratio, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10 * params.x_star})
        best = min(best, float(res.fun))
    return B * min(best, 1.0)


def supersolution_V1_curve(params: ModelParams, risk: RiskSpec,
                           salvage: SalvageSpec, xs: np.ndarray,
                           n_table: int = 4096) -> np.ndarray:
    """V1 sampled on many points at once via a shared beta table.

    Uses a dense log-spaced t-grid; the infimum over the table is an upper
    bound of the true infimum, so dominance checks against it are sound.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= 0) or np.any(xs >= params.x_star):
        raise ValueError("V1 curve requires 0 < x < x_star")
    B, r = params.B, params.r
    x_min = float(np.min(xs))
    ts = np.geomspace(x_min, params.x_star * (1.0 - 1e-9), n_table)
    betas = _beta_table(params, risk, salvage, ts)
    log_ts = np.log(ts)
    ratio = betas[None, :] / (r * (log_ts[None, :] - np.log(xs)[:, None])
                              + betas[None, :])
    ratio[ts[None, :] < xs[:, None]] = np.inf
    return B * np.minimum(np.min(ratio, axis=1), 1.0)


def find_x_diamond(params: ModelParams, risk: RiskSpec,
                   n_scan: int = 10_000) -> tuple:
    """Smallest scan point past which the V2 subsolution inequality holds.

    Returns (x_diamond, reason): x_diamond is None when the preconditions
    fail (reason 'asp1-threshold' or 'asp1-blowup') or when the tail
    inequality never stabilizes on the widened scan ('tail-condition').
    """
    lam, r, xs = params.lam, params.r, params.x_star
    if lam + r <= 0 or xs < 2.0 / (lam + r):
        return None, "asp1-threshold"
    if not _rho_blowup_fast(risk, xs):
        return None, "asp1-blowup"

    C1 = lam + params.mu + params.v_max
    sig2 = params.sigma ** 2
    for n in (n_scan, 10 * n_scan):   # widen the scan once before giving up
        grid = np.linspace(xs / 2.0, xs, n, endpoint=False)
        g = np.asarray(risk.rho(grid)) * np.log(xs / grid) * (xs - grid)
        cond = (2.0 / (math.log(2.0) * xs)) * (g - (C1 + sig2) * xs) - r >= 0.0
        suffix_ok = np.flip(np.logical_and.accumulate(np.flip(cond)))
        idx = np.flatnonzero(suffix_ok)
        if idx.size:
            return float(grid[idx[0]]), ""
    return None, "tail-condition"


def _rho_blowup_fast(risk: RiskSpec, x_star: float) -> bool:
    """Does rho(x)(x_star - x)^2 diverge at x_star?"""
    if risk.family == "barrier":
        return risk.q > 2.0
    vals = np.array([float(risk.rho(x_star - 10.0 ** -k)) * (10.0 ** -k) ** 2
                     for k in range(2, 9)])
    ratios = vals[1:] / np.maximum(vals[:-1], 1e-300)
    return bool(np.all(ratios >= 10.0))


def subsolution_V2(params: ModelParams, risk: RiskSpec, x_diamond: float,
                   x) -> np.ndarray | float:
    """Lower bound V2 on [x_diamond, x_star], 0 at x_diamond and B at x_star."""
    x = np.asarray(x, dtype=float)
    xs = params.x_star
    if np.any(x < x_diamond) or np.any(x > xs):
        raise ValueError("V2 is defined on [x_diamond, x_star]")
    num = np.log(xs / x) * (1.0 - x / xs)
    den = math.log(xs / x_diamond) * (1.0 - x_diamond / xs)
    out = params.B * (1.0 - num / den)
    return out if out.ndim else float(out)


def subsolution_p_minus(bounds: BoundsReport, x) -> np.ndarray | float:
    """Price subsolution p_minus(x) = 1 - k x^gamma on [0, x_bar0].

    Endpoints are exact by construction: p_minus(0) = 1 and
    p_minus(x_bar0) = theta_min.  Evaluation runs in log space because k
    and x_bar0 can leave the double range.
    """
    x = np.asarray(x, dtype=float)
    x_bar0 = bounds.x_bar0
    if np.any(x < 0) or np.any(x > x_bar0):
        raise ValueError("p_minus is defined on [0, x_bar0]")
    out = np.ones(x.shape)
    if bounds.log_k > -math.inf:
        pos = x > 0
        with np.errstate(divide="ignore"):
            scale = np.exp(bounds.gamma * (np.log(x[pos]) - bounds.log_x_bar0))
        out[pos] = 1.0 - (1.0 - bounds.theta_min) * scale
        out[x == x_bar0] = bounds.theta_min
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# regime classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeClassification:
    """Near-threshold control regime with the raw inequality data."""

    label: str                   # DevaluePay | NoAction | Indeterminate
    beta_star: float
    devalue_pay_threshold: float     # B r min{1/c'(0), 1/(L'(0) x_star)}
    devalue_pay_holds: bool
    x_star_threshold: float          # 2/(r+lam)
    threshold_wide_enough: bool      # x_star >= 2/(r+lam)
    blowup_fast: bool                # rho(x)(x_star-x)^2 -> inf

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "beta_star": _finite_or_str(self.beta_star),
            "devalue_pay_threshold": _finite_or_str(self.devalue_pay_threshold),
            "devalue_pay_holds": self.devalue_pay_holds,
            "x_star_threshold": self.x_star_threshold,
            "threshold_wide_enough": self.threshold_wide_enough,
            "blowup_fast": self.blowup_fast,
        }


def classify_regime(params: ModelParams, costs: CostSpec, risk: RiskSpec,
                    salvage: SalvageSpec, n_scan: int = 10_000) -> RegimeClassification:
    """Decide the near-x_star regime from the two explicit tests.

    DevaluePay needs an integrable risk with beta* below
    B r min{1/c'(0), 1/(L'(0) x_star)} (zero marginal costs make the
    corresponding reciprocal infinite); NoAction needs the wide-threshold
    and fast-blow-up conditions.  Anything else is Indeterminate.  With
    v_max = 0 devaluation is impossible, so DevaluePay never applies.
    """
    del n_scan  # sampling density is fixed by the closed-form family tests
    bstar = compute_beta_star(params, risk, salvage)
    inv_c = math.inf if (costs.v_max == 0 or costs.alpha_c == 0) else 1.0 / costs.alpha_c
    inv_L = math.inf if costs.alpha_L == 0 else 1.0 / (costs.alpha_L * params.x_star)
    threshold = params.B * params.r * min(inv_c, inv_L)
    dp = (costs.v_max > 0 and math.isfinite(bstar) and bstar < threshold)

    wide = params.x_star >= 2.0 / (params.r + params.lam)
    fast = _rho_blowup_fast(risk, params.x_star)

    if dp:
        label = "DevaluePay"
    elif wide and fast:
        label = "NoAction"
    else:
        label = "Indeterminate"
    return RegimeClassification(
        label=label, beta_star=bstar, devalue_pay_threshold=threshold,
        devalue_pay_holds=dp, x_star_threshold=2.0 / (params.r + params.lam),
        threshold_wide_enough=wide, blowup_fast=fast)


# ---------------------------------------------------------------------------
# verification of a computed Solution
# ---------------------------------------------------------------------------

@dataclass
class VerificationItem:
    name: str
    passed: bool | None          # None when the check is not applicable
    worst: float = 0.0           # largest violation magnitude
    witness: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "witness": self.witness, "note": self.note}


@dataclass
class VerificationReport:
    items: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items if it.passed is not None)

    def failures(self) -> list:
        return [it for it in self.items
                if it.passed is not None and not it.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "items": [it.to_dict() for it in self.items]}


def _item_bound(name, values, bound, xs, sense, note="") -> VerificationItem:
    """Check values <= bound (sense '<=') or >= ('>=') with witness."""
    gap = values - bound if sense == "<=" else bound - values
    worst = float(np.max(gap)) if gap.size else 0.0
    ok = worst <= 0.0
    witness = float(xs[int(np.argmax(gap))]) if (gap.size and not ok) else None
    return VerificationItem(name, ok, max(worst, 0.0), witness, note)


def verify_solution(solution: Solution, params: ModelParams, costs: CostSpec,
                    risk: RiskSpec, salvage: SalvageSpec,
                    steady_tol: float = 1e-8) -> VerificationReport:
    """Run the full certificate suite against a converged solution.

    Covers boundary data, ranges, monotonicity, residual norms, dominance
    by V1, dominance over V2 past x_diamond when applicable, the price
    subsolution on [0, x_bar0], both devaluation dead zones, and
    consistency of the near-threshold controls with the classified regime.
    """
    xs = solution.grid.nodes
    V, p = solution.V, solution.p
    B = params.B
    rep = VerificationReport()
    bounds = compute_constants(params, costs, risk, salvage)

    # boundary data is imposed exactly by the solver
    theta_xs = salvage.theta_at_x_star()
    for name, got, want in (("boundary_V_at_0", V[0], 0.0),
                            ("boundary_V_at_x_star", V[-1], B),
                            ("boundary_p_at_0", p[0], 1.0),
                            ("boundary_p_at_x_star", p[-1], theta_xs)):
        err = float(abs(got - want))
        rep.items.append(VerificationItem(name, err == 0.0, err,
                                          None if err == 0.0 else float(xs[0])))

    rep.items.append(_item_bound("V_below_B", V, B, xs, "<="))
    rep.items.append(_item_bound("V_nonnegative", V, 0.0, xs, ">="))
    rep.items.append(_item_bound("p_above_theta_min", p,
                                 bounds.theta_min - 1e-6, xs, ">="))
    rep.items.append(_item_bound("p_below_one", p, 1.0 + 1e-6, xs, "<="))

    fwd = np.diff(V)
    rep.items.append(_item_bound("V_monotone", fwd, -1e-8 * max(B, 1.0),
                                 xs[1:], ">="))

    res = solution.residual_max
    rep.items.append(VerificationItem("residual_norms", res <= steady_tol, res,
                                      note=f"tol {steady_tol:g}"))

    interior = (xs > 0) & (xs < params.x_star)
    V1 = supersolution_V1_curve(params, risk, salvage, xs[interior])
    rep.items.append(_item_bound("V_below_V1", V[interior],
                                 V1 + 1e-6 * max(B, 1.0), xs[interior], "<="))

    in_zone = xs <= bounds.x_bar0
    pm = np.asarray(subsolution_p_minus(bounds, xs[in_zone]))
    note = ("vacuous beyond x = 0" if bounds.x_bar0 < solution.grid.h else
            f"{int(np.sum(in_zone))} nodes")
    rep.items.append(_item_bound("p_above_p_minus", p[in_zone], pm - 1e-6,
                                 xs[in_zone], ">=", note))

    x_dia, reason = find_x_diamond(params, risk)
    if x_dia is None:
        rep.items.append(VerificationItem("V_above_V2", None,
                                          note=f"n/a: {reason}"))
    else:
        tail = xs >= x_dia
        V2 = np.asarray(subsolution_V2(params, risk, x_dia, xs[tail]))
        rep.items.append(_item_bound("V_above_V2", V[tail],
                                     V2 - 1e-6 * max(B, 1.0), xs[tail], ">=",
                                     f"x_diamond = {x_dia:.6g}"))

    # devaluation dead zones: empirical (max |V'| from the solution) and
    # certified (M*, usually vacuous at grid resolution)
    max_dv = float(np.max(np.abs(solution.dV)))
    if costs.v_max == 0:
        emp_zone = np.ones_like(xs, dtype=bool)
        emp_note = "v_max = 0: whole domain"
    else:
        emp_radius = costs.alpha_c / max_dv if max_dv > 0 else params.x_star
        emp_zone = xs <= emp_radius
        emp_note = f"radius {emp_radius:.6g}"
    rep.items.append(_item_bound("v_dead_zone_empirical",
                                 solution.v_star[emp_zone], 0.0,
                                 xs[emp_zone], "<=", emp_note))
    cert = xs <= bounds.v_dead_zone
    cert_note = ("vacuously passed: radius below grid spacing"
                 if bounds.v_dead_zone < solution.grid.h
                 else f"radius {bounds.v_dead_zone:.6g}")
    rep.items.append(_item_bound("v_dead_zone_certified",
                                 solution.v_star[cert], 0.0,
                                 xs[cert], "<=", cert_note))

    regime = classify_regime(params, costs, risk, salvage)
    window = (xs >= 0.95 * params.x_star) & (xs < params.x_star)
    if regime.label == "DevaluePay":
        active = ((solution.u_star[window] > 1e-9)
                  & (solution.v_star[window] > 1e-9))
        ok = bool(np.all(active))
        wit = (float(xs[window][int(np.argmin(active))]) if not ok else None)
        rep.items.append(VerificationItem("regime_controls", ok,
                                          0.0 if ok else 1.0, wit,
                                          "DevaluePay: controls active near x_star"))
    elif regime.label == "NoAction":
        worst = float(np.max(np.maximum(solution.u_star[window],
                                        solution.v_star[window])))
        ok = worst <= 1e-9
        rep.items.append(VerificationItem("regime_controls", ok, worst,
                                          None,
                                          "NoAction: controls zero near x_star"))
    else:
        rep.items.append(VerificationItem("regime_controls", None,
                                          note="n/a: Indeterminate regime"))
    return rep
