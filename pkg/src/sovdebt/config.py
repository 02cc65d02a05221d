"""INI configuration files: schema, validation, loading with line numbers.

A run configuration has sections [model], [costs], [risk], [salvage] plus
optional [solver] and [sim].  Unknown sections or keys are errors; messages
carry the file name and line number.  Only the built-in families (barrier
costs and risk, linear salvage) are expressible in files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .model import CostSpec, ModelParams, RiskSpec, SalvageSpec
from .montecarlo import SimConfig
from .solver import DEFAULT_EPS_SCHEDULE, SolverConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "load_raw",
           "build_run_config", "write_config"]

_SCHEMA = {
    "model": {"r", "lambda", "mu", "sigma", "B", "x_star", "v_max"},
    "costs": {"alpha_L", "alpha_c"},
    "risk": {"family", "kappa", "q"},
    "salvage": {"family", "m"},
    "solver": {"n", "eps_schedule", "steady_state_tol", "max_iterations",
               "pseudo_time_safety", "policy_iteration", "howard_threshold",
               "max_explicit_steps"},
    "sim": {"dt", "horizon", "n_paths", "seed", "x0", "salvage_at_state"},
}
_REQUIRED = {"model": {"r", "lambda", "mu", "sigma", "B", "x_star", "v_max"},
             "costs": {"alpha_L", "alpha_c"},
             "risk": {"kappa", "q"},
             "salvage": {"m"}}


class ConfigError(ValueError):
    """Schema or value error in a configuration file."""


@dataclass
class RunConfig:
    """Everything a run needs: model objects plus solver/sim settings."""

    params: ModelParams
    costs: CostSpec
    risk: RiskSpec
    salvage: SalvageSpec
    solver: SolverConfig
    sim: SimConfig
    raw: dict = field(default_factory=dict, repr=False)


def _line_of(path, section, key=None) -> int:
    """Best-effort line number of a section header or key for messages."""
    in_section = section is None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                s = line.strip()
                if s.startswith("[") and s.endswith("]"):
                    in_section = s[1:-1].strip() == section
                    if in_section and key is None:
                        return lineno
                elif in_section and key is not None:
                    name = s.split("=", 1)[0].split(":", 1)[0].strip()
                    if name == key:
                        return lineno
    except OSError:
        pass
    return 0


def load_raw(path) -> dict:
    """Parse and schema-check an INI file into {section: {key: str}}."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str    # keys are case-sensitive (B vs b)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    raw = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}:{_line_of(path, section)}: "
                              f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}:{_line_of(path, section, key)}: "
                                  f"unknown key '{key}' in [{section}]")
        raw[section] = dict(parser[section])
    for section, keys in _REQUIRED.items():
        if section not in raw:
            raise ConfigError(f"{path}: missing section [{section}]")
        missing = keys - set(raw[section])
        if missing:
            raise ConfigError(f"{path}:{_line_of(path, section)}: "
                              f"[{section}] missing keys {sorted(missing)}")
    return raw


def _get_float(raw, path, section, key, default=None) -> float:
    txt = raw.get(section, {}).get(key)
    if txt is None:
        return default
    try:
        return float(txt)
    except ValueError as exc:
        raise ConfigError(f"{path}:{_line_of(path, section, key)}: "
                          f"{key} must be a number, got {txt!r}") from exc


def _get_int(raw, path, section, key, default=None) -> int:
    val = _get_float(raw, path, section, key,
                     default=float(default) if default is not None else None)
    return int(val) if val is not None else None


def _get_bool(raw, path, section, key, default) -> bool:
    txt = raw.get(section, {}).get(key)
    if txt is None:
        return default
    low = txt.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{path}:{_line_of(path, section, key)}: "
                      f"{key} must be a boolean, got {txt!r}")


def build_run_config(raw: dict, path="<config>") -> RunConfig:
    """Construct model objects and settings from a validated raw dict."""
    for section, family_default in (("risk", "barrier"), ("salvage", "linear")):
        fam = raw.get(section, {}).get("family", family_default)
        if fam != family_default:
            raise ConfigError(f"{path}:{_line_of(path, section, 'family')}: "
                              f"only the {family_default} {section} family is "
                              f"supported in config files, got {fam!r}")
    try:
        params = ModelParams(
            r=_get_float(raw, path, "model", "r"),
            lam=_get_float(raw, path, "model", "lambda"),
            mu=_get_float(raw, path, "model", "mu"),
            sigma=_get_float(raw, path, "model", "sigma"),
            B=_get_float(raw, path, "model", "B"),
            x_star=_get_float(raw, path, "model", "x_star"),
            v_max=_get_float(raw, path, "model", "v_max"))
        costs = CostSpec(alpha_L=_get_float(raw, path, "costs", "alpha_L"),
                         alpha_c=_get_float(raw, path, "costs", "alpha_c"),
                         v_max=params.v_max)
        risk = RiskSpec(x_star=params.x_star,
                        kappa=_get_float(raw, path, "risk", "kappa"),
                        q=_get_float(raw, path, "risk", "q"))
        salvage = SalvageSpec(x_star=params.x_star,
                              m=_get_float(raw, path, "salvage", "m"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    sched = DEFAULT_EPS_SCHEDULE
    txt = raw.get("solver", {}).get("eps_schedule")
    if txt is not None:
        try:
            sched = tuple(float(tok) for tok in txt.split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{_line_of(path, 'solver', 'eps_schedule')}: "
                f"eps_schedule must be comma-separated numbers") from exc
    try:
        solver = SolverConfig(
            n=_get_int(raw, path, "solver", "n", 801),
            epsilon_schedule=sched,
            pseudo_time_safety=_get_float(raw, path, "solver",
                                          "pseudo_time_safety", 0.9),
            steady_state_tol=_get_float(raw, path, "solver",
                                        "steady_state_tol", 1e-8),
            max_iterations=_get_int(raw, path, "solver", "max_iterations", 300),
            policy_iteration=_get_bool(raw, path, "solver",
                                       "policy_iteration", True),
            howard_threshold=_get_float(raw, path, "solver",
                                        "howard_threshold", 1e-3),
            max_explicit_steps=_get_int(raw, path, "solver",
                                        "max_explicit_steps", 4000))
        sim = SimConfig(
            dt=_get_float(raw, path, "sim", "dt", 1e-3),
            horizon=_get_float(raw, path, "sim", "horizon", None),
            n_paths=_get_int(raw, path, "sim", "n_paths", 10_000),
            seed=_get_int(raw, path, "sim", "seed", 0),
            x0=_get_float(raw, path, "sim", "x0", 0.5),
            salvage_at_state=_get_bool(raw, path, "sim",
                                       "salvage_at_state", True))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig(params=params, costs=costs, risk=risk, salvage=salvage,
                     solver=solver, sim=sim, raw=raw)


def load_config(path) -> RunConfig:
    """Load, schema-check and build a run configuration from an INI file."""
    return build_run_config(load_raw(path), path=path)


def write_config(run: RunConfig, path) -> None:
    """Serialize a run configuration back to INI (built-in families only)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["model"] = {
        "r": repr(run.params.r), "lambda": repr(run.params.lam),
        "mu": repr(run.params.mu), "sigma": repr(run.params.sigma),
        "B": repr(run.params.B), "x_star": repr(run.params.x_star),
        "v_max": repr(run.params.v_max)}
    parser["costs"] = {"alpha_L": repr(run.costs.alpha_L),
                       "alpha_c": repr(run.costs.alpha_c)}
    parser["risk"] = {"kappa": repr(run.risk.kappa), "q": repr(run.risk.q)}
    parser["salvage"] = {"m": repr(run.salvage.m)}
    parser["solver"] = {
        "n": str(run.solver.n),
        "eps_schedule": ",".join(repr(e) for e in run.solver.epsilon_schedule),
        "steady_state_tol": repr(run.solver.steady_state_tol),
        "max_iterations": str(run.solver.max_iterations),
        "pseudo_time_safety": repr(run.solver.pseudo_time_safety),
        "policy_iteration": str(run.solver.policy_iteration).lower(),
        "howard_threshold": repr(run.solver.howard_threshold),
        "max_explicit_steps": str(run.solver.max_explicit_steps)}
    sim = {"dt": repr(run.sim.dt), "n_paths": str(run.sim.n_paths),
           "seed": str(run.sim.seed), "x0": repr(run.sim.x0),
           "salvage_at_state": str(run.sim.salvage_at_state).lower()}
    if run.sim.horizon is not None:
        sim["horizon"] = repr(run.sim.horizon)
    parser["sim"] = sim
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
