"""Declarative study specifications.

Configs are plain JSON-compatible dicts (model, schemes, study,
functional) as read by the command-line front end.  Keeping the builders
here, importable at module level, lets worker processes rebuild runners
from the spec instead of pickling closures.
"""

from __future__ import annotations

import numpy as np

from ._pool import map_chunks
from .convergence import (
    CHUNK,
    HestonRunner,
    LevelSweep,
    MultiSchemeRunner,
    ScalarSchemeRunner,
    StudyConfig,
    run_sweep_chunk,
)
from .errors import ConfigurationError
from .iterint import method_from_spec
from .models import (
    BlackScholesParams,
    HestonParams,
    OptionSpec,
    make_black_scholes,
    payoff_path,
)

__all__ = [
    "build_study",
    "build_runner",
    "build_functional",
    "scheme_label",
    "parallel_sweep",
    "CLI_METRICS",
]

CLI_METRICS = {"strong": "strong_abs", "weak": "weak_mean", "mse": "mse",
               "l2": "l2_vector"}

_BS_DEFAULTS = {"r": 2.0, "sigma": 1.0, "x0": 1.0}
_HESTON_DEFAULTS = {"r": 0.04, "theta": 0.07, "kappa": 3.0, "xi": 0.24,
                    "rho": 0.1, "eta": 2.0 / 3.0, "s0": 100.0, "v0": 0.25}


def _take(cfg: dict, defaults: dict, context: str) -> dict:
    out = dict(defaults)
    for key, value in cfg.items():
        if key == "name":
            continue
        if key not in defaults:
            raise ConfigurationError(f"unknown {context} field {key!r}")
        out[key] = value
    return out


def build_model_params(model_cfg: dict):
    name = model_cfg.get("name")
    if name == "black_scholes":
        return BlackScholesParams(**_take(model_cfg, _BS_DEFAULTS, "black_scholes"))
    if name == "heston":
        return HestonParams(**_take(model_cfg, _HESTON_DEFAULTS, "heston"))
    raise ConfigurationError(f"unknown model {name!r}; use black_scholes or heston")


def _method_rule(scheme_cfg: dict):
    """Fixed method or a per-level resolution rule n_k = c / dt (p = c / dt)."""
    name = scheme_cfg.get("method")
    if name is None:
        return None
    if name == "levy_fourier":
        if "p" in scheme_cfg:
            return method_from_spec(name, int(scheme_cfg["p"]))
        c = float(scheme_cfg.get("p_rule", 1.0))
        return lambda dt: method_from_spec(name, max(1, round(c / dt)))
    if "n_k" in scheme_cfg:
        return method_from_spec(name, int(scheme_cfg["n_k"]))
    c = float(scheme_cfg.get("n_k_rule", 1.0))
    return lambda dt: method_from_spec(name, max(1, round(c / dt)))


def scheme_label(scheme_cfg: dict) -> str:
    name = scheme_cfg["name"]
    method = scheme_cfg.get("method")
    return f"{name}({method})" if method else name


def build_runner(model_cfg: dict, scheme_cfg: dict):
    """Runner for one (model, scheme) combination."""
    params = build_model_params(model_cfg)
    name = scheme_cfg.get("name")
    if isinstance(params, BlackScholesParams):
        if name not in ("euler", "milstein"):
            raise ConfigurationError(
                f"black_scholes supports euler and milstein, not {name!r}"
            )
        return ScalarSchemeRunner(make_black_scholes(params), name, params.x0)
    if name == "euler":
        return HestonRunner(params, "euler")
    if name == "milstein_1d":
        return HestonRunner(params, "milstein_1d")
    if name == "milstein_2d":
        rule = _method_rule(scheme_cfg)
        if rule is None:
            raise ConfigurationError("milstein_2d needs a method entry")
        return HestonRunner(params, "milstein_2d", rule)
    raise ConfigurationError(
        f"heston supports euler, milstein_1d and milstein_2d, not {name!r}"
    )


def build_study(study_cfg: dict) -> StudyConfig:
    known = {"base_dt", "factor", "levels", "replicates", "metric", "t0", "horizon"}
    unknown = set(study_cfg) - known
    if unknown:
        raise ConfigurationError(f"unknown study fields {sorted(unknown)}")
    if "base_dt" not in study_cfg:
        raise ConfigurationError("study needs base_dt")
    return StudyConfig(**study_cfg)


def build_functional(func_cfg, model_cfg: dict, study_cfg: StudyConfig):
    """Terminal functional: a selected coordinate or a discounted payoff."""
    if func_cfg is None:
        return None
    kind = func_cfg.get("type")
    if kind == "coordinate":
        index = int(func_cfg.get("index", 0))
        return lambda states: states[:, index]
    if kind == "payoff":
        params = build_model_params(model_cfg)
        spec = OptionSpec(kind=func_cfg.get("kind", "call"),
                          strike=float(func_cfg.get("strike", getattr(params, "s0", 100.0))),
                          maturity=study_cfg.horizon - study_cfg.t0,
                          rate=params.r)
        payoff = payoff_path(spec)
        return lambda states: payoff(states[:, 0])
    raise ConfigurationError(f"unknown functional type {kind!r}")


def _sweep_worker(payload: dict, lo: int, hi: int):
    runner = build_runner(payload["model"], payload["scheme"])
    cfg = build_study(payload["study"])
    return run_sweep_chunk(runner, cfg, payload["master_seed"], lo, hi,
                           verify_coupling=(lo == 0))


def parallel_sweep(model_cfg: dict, scheme_cfg: dict, cfg: StudyConfig,
                   master_seed: int, workers: int = 1) -> LevelSweep:
    """Run one study sweep, optionally on a process pool.

    Chunk boundaries are fixed, each replicate derives its randomness
    from its own index, and chunk results are assembled in index order,
    so the sweep is byte-identical for any worker count.
    """
    study_cfg = {"base_dt": cfg.base_dt, "factor": cfg.factor, "levels": cfg.levels,
                 "replicates": cfg.replicates, "metric": cfg.metric,
                 "t0": cfg.t0, "horizon": cfg.horizon}
    payload = {"model": model_cfg, "scheme": scheme_cfg, "study": study_cfg,
               "master_seed": master_seed}
    results = map_chunks(_sweep_worker, payload, cfg.replicates, CHUNK, workers)
    terminal = [np.concatenate([res[0][r] for res in results])
                for r in range(cfg.levels)]
    ok = np.concatenate([res[1] for res in results])
    exacts = [res[2] for res in results if res[2] is not None]
    return LevelSweep(
        config=cfg,
        deltas=cfg.deltas(),
        terminal=terminal,
        ok=ok,
        exact=np.concatenate(exacts) if exacts else None,
        clamp_steps=sum(res[3] for res in results),
    )
