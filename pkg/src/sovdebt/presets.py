"""Named parameter sets used throughout the tests and demos.

BASE is the all-purpose configuration; REGIME1 has slowly exploding risk
(q < 1, integrable near x_star) so paying and devaluing stays optimal near
the threshold; REGIME2 has fast blow-up (q > 2) and a wide domain, where no
action is optimal near the threshold.
"""

from __future__ import annotations

from .model import CostSpec, ModelParams, RiskSpec, SalvageSpec

__all__ = ["base_setup", "regime1_setup", "regime2_setup"]


def base_setup():
    """BASE: moderate risk blow-up, both control channels active."""
    params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3,
                         B=5.0, x_star=1.5, v_max=0.5)
    costs = CostSpec(alpha_L=0.5, alpha_c=0.1, v_max=params.v_max)
    risk = RiskSpec(x_star=params.x_star, kappa=1.0, q=0.5)
    salvage = SalvageSpec(x_star=params.x_star, m=0.4)
    return params, costs, risk, salvage


def regime1_setup():
    """REGIME1: integrable risk, large B; devalue-and-pay near x_star."""
    params = ModelParams(r=0.1, lam=0.2, mu=0.02, sigma=0.1,
                         B=100.0, x_star=1.5, v_max=0.1)
    costs = CostSpec(alpha_L=0.1, alpha_c=0.1, v_max=params.v_max)
    risk = RiskSpec(x_star=params.x_star, kappa=0.2, q=0.5)
    salvage = SalvageSpec(x_star=params.x_star, m=0.2)   # theta(x_star) = 0.8
    return params, costs, risk, salvage


def regime2_setup():
    """REGIME2: fast risk blow-up (q = 3) on a wide domain; no action near x_star.

    B = 1 keeps the devaluation trigger x V'(x) comfortably below c'(0)
    throughout the top 5% of the domain (the trigger scales linearly in B).
    """
    params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3,
                         B=1.0, x_star=8.0, v_max=0.5)
    costs = CostSpec(alpha_L=0.5, alpha_c=0.1, v_max=params.v_max)
    risk = RiskSpec(x_star=params.x_star, kappa=1.0, q=3.0)
    salvage = SalvageSpec(x_star=params.x_star, m=0.4)
    return params, costs, risk, salvage
