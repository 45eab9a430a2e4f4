"""Convergence-order estimation on coupled grids.

A study simulates every replicate on a hierarchy of grids dt, dt/k,
dt/k^2, ... that share one Wiener path (finer grids are bridge
refinements of the base grid).  Errors are measured either against a
known exact solution or between consecutive grid levels, which needs no
exact solution; the order estimate is the least-squares slope of
log(error) against log(dt).

Replicates are independent work units keyed by replicate index; results
are assembled in index order, so a study is reproducible bit for bit
from (master seed, config) no matter how the work is scheduled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateDataError
from .iterint import DoubleIntegralMethod
from .models import HestonParams, heston_drive_batch
from .schemes import MultiSde, ScalarSde, SeedContext, _drive_multi, _drive_scalar
from .wiener import SeedPath, TimeGrid, coarsen, generate_segment, refine_bridge

__all__ = [
    "StudyConfig",
    "RateReport",
    "LevelSweep",
    "ScalarSchemeRunner",
    "MultiSchemeRunner",
    "HestonRunner",
    "run_sweep",
    "run_sweep_chunk",
    "level_errors",
    "error_vs_truth",
    "error_coupled_strong",
    "error_coupled_weak",
    "error_coupled_mse",
    "fit_rate",
    "write_levels_csv",
    "write_summary_csv",
]

METRICS = ("strong_abs", "weak_mean", "mse", "l2_vector")

# Replicates are processed in fixed-size blocks; the block size is part of
# the study definition (not tunable) so results never depend on scheduling.
CHUNK = 1024


@dataclass(frozen=True)
class StudyConfig:
    """Grid hierarchy and sampling plan of one convergence study."""

    base_dt: float
    factor: int = 2
    levels: int = 3
    replicates: int = 100
    metric: str = "strong_abs"
    t0: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.factor < 2:
            raise ConfigurationError(f"refinement factor must be >= 2, got {self.factor}")
        if self.levels < 3:
            raise ConfigurationError(f"need at least 3 levels, got {self.levels}")
        if self.replicates < 30:
            raise ConfigurationError(
                f"need at least 30 replicates for a meaningful error estimate, "
                f"got {self.replicates}"
            )
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric {self.metric!r}; use one of {METRICS}")
        span = self.horizon - self.t0
        if span <= 0 or self.base_dt <= 0:
            raise ConfigurationError("need horizon > t0 and base_dt > 0")
        n0 = span / self.base_dt
        if abs(n0 - round(n0)) > 1e-9 or round(n0) < 1:
            raise ConfigurationError(
                f"base_dt={self.base_dt} does not divide [{self.t0}, {self.horizon}]"
            )

    @property
    def base_steps(self) -> int:
        return round((self.horizon - self.t0) / self.base_dt)

    def delta(self, level: int) -> float:
        return self.base_dt / self.factor**level

    def deltas(self) -> list[float]:
        return [self.delta(r) for r in range(self.levels)]


@dataclass
class RateReport:
    """Fitted convergence rate of one scheme."""

    levels: list          # (delta, error) pairs, coarse to fine
    gamma: float          # OLS slope of log(error) on log(delta)
    log_c: float          # intercept, natural log
    r_squared: float
    divergent: int = 0
    monotone: bool = True


@dataclass
class LevelSweep:
    """Raw output of one study sweep: terminal states per grid level."""

    config: StudyConfig
    deltas: list
    terminal: list        # per level, (M, d) arrays
    ok: np.ndarray        # (M,) replicate survived every level
    exact: np.ndarray | None = None   # (M, d) when the model has a closed form
    clamp_steps: int = 0

    @property
    def divergent(self) -> int:
        return int(self.ok.size - np.count_nonzero(self.ok))


def _resolve_method(rule, dt):
    if rule is None or isinstance(rule, DoubleIntegralMethod):
        return rule
    return rule(dt)


@dataclass
class ScalarSchemeRunner:
    """Drives a scalar SDE with Euler-Maruyama or Milstein."""

    sde: ScalarSde
    scheme: str
    x0: float
    m: int = field(default=1, init=False)
    d: int = field(default=1, init=False)

    def __post_init__(self):
        if self.scheme not in ("euler", "milstein"):
            raise ConfigurationError(f"unknown scalar scheme {self.scheme!r}")
        if self.scheme == "milstein" and self.sde.milstein is None:
            raise ConfigurationError("ScalarSde carries no Milstein coefficient")

    def run_batch(self, grid, dw, ctx):
        out = _drive_scalar(self.sde, self.x0, dw[:, 0, :], grid, self.scheme,
                            keep_path=False)
        return out, 0

    def exact_terminal(self, w_total, elapsed):
        if self.sde.exact_solution is None:
            return None
        return np.asarray(self.sde.exact_solution(elapsed, w_total[:, 0], self.x0))[:, None]


@dataclass
class MultiSchemeRunner:
    """Drives a MultiSde with Euler-Maruyama or Milstein."""

    sde: MultiSde
    scheme: str
    x0: np.ndarray
    method_rule: object = None    # DoubleIntegralMethod or callable dt -> method

    def __post_init__(self):
        if self.scheme not in ("euler", "milstein"):
            raise ConfigurationError(f"unknown multidimensional scheme {self.scheme!r}")
        self.x0 = np.asarray(self.x0, dtype=np.float64)

    @property
    def m(self):
        return self.sde.m

    @property
    def d(self):
        return self.sde.d

    def run_batch(self, grid, dw, ctx):
        method = _resolve_method(self.method_rule, grid.dt)
        out = _drive_multi(self.sde, self.x0, dw, grid, self.scheme, method, ctx,
                           keep_path=False)
        return out, 0

    def exact_terminal(self, w_total, elapsed):
        return None


@dataclass
class HestonRunner:
    """Drives one of the Heston discretizations."""

    params: HestonParams
    variant: str
    method_rule: object = None
    m: int = field(default=2, init=False)
    d: int = field(default=2, init=False)

    def run_batch(self, grid, dw, ctx):
        method = _resolve_method(self.method_rule, grid.dt)
        return heston_drive_batch(self.params, self.variant, dw, grid, method, ctx,
                                  keep_path=False)

    def exact_terminal(self, w_total, elapsed):
        return None


def run_sweep_chunk(runner, cfg: StudyConfig, master_seed: int, lo: int, hi: int,
                    verify_coupling: bool = False):
    """Simulate replicates [lo, hi) on every grid level.

    Returns (terminal_per_level, ok, exact, clamp_steps) for the slice.
    Level r+1 increments are bridge refinements of level r, so all levels
    see the same underlying path.
    """
    base_grid = TimeGrid(cfg.t0, cfg.horizon, cfg.base_steps)
    segs = [generate_segment(SeedPath(master_seed, replicate=i), runner.m, base_grid)
            for i in range(lo, hi)]
    reps = np.arange(lo, hi)
    terminal = []
    ok = np.ones(hi - lo, dtype=bool)
    clamp_steps = 0
    for level in range(cfg.levels):
        grid = segs[0].grid
        dw = np.stack([s.increments for s in segs])
        ctx = SeedContext(master_seed, reps, level)
        out, clamps = runner.run_batch(grid, dw, ctx)
        terminal.append(out.terminal)
        ok &= out.ok
        clamp_steps += clamps
        if level < cfg.levels - 1:
            refined = [refine_bridge(s, cfg.factor) for s in segs]
            if verify_coupling and refined:
                back = coarsen(refined[0], cfg.factor)
                if not np.allclose(back.increments, segs[0].increments,
                                   rtol=0.0, atol=1e-12):
                    raise AssertionError("bridge refinement lost its block sums")
            segs = refined
    w_total = np.stack([s.terminal for s in segs])
    exact = runner.exact_terminal(w_total, cfg.horizon - cfg.t0)
    return terminal, ok, exact, clamp_steps


def run_sweep(runner, cfg: StudyConfig, master_seed: int) -> LevelSweep:
    """Run a whole study in this process (see studyspec for worker pools)."""
    chunks = [(lo, min(lo + CHUNK, cfg.replicates))
              for lo in range(0, cfg.replicates, CHUNK)]
    terminal = [[] for _ in range(cfg.levels)]
    ok_parts, exact_parts = [], []
    clamp_steps = 0
    for idx, (lo, hi) in enumerate(chunks):
        term, ok, exact, clamps = run_sweep_chunk(runner, cfg, master_seed, lo, hi,
                                                  verify_coupling=(idx == 0))
        for r in range(cfg.levels):
            terminal[r].append(term[r])
        ok_parts.append(ok)
        clamp_steps += clamps
        if exact is not None:
            exact_parts.append(exact)
    return LevelSweep(
        config=cfg,
        deltas=cfg.deltas(),
        terminal=[np.concatenate(parts) for parts in terminal],
        ok=np.concatenate(ok_parts),
        exact=np.concatenate(exact_parts) if exact_parts else None,
        clamp_steps=clamp_steps,
    )


def _functional_values(states, functional):
    if functional is None:
        return states[:, 0]
    return np.asarray(functional(states))


def level_errors(sweep: LevelSweep, mode: str, metric: str,
                 functional: Callable | None = None):
    """Reduce a sweep to per-level (delta, error) pairs.

    ``mode`` is "truth" (needs the exact solution; one point per grid) or
    "coupled" (differences of consecutive grids, labelled by the coarser
    delta).  ``functional`` maps terminal states (M, d) to scalars (M,);
    by default the first coordinate.  The l2_vector metric ignores it and
    measures the euclidean norm across coordinates.
    """
    ok = sweep.ok
    if not ok.any():
        raise DegenerateDataError("every replicate diverged")
    if mode == "truth":
        if sweep.exact is None:
            raise ConfigurationError("no exact solution available for truth mode")
        if metric not in ("strong_abs", "l2_vector"):
            raise ConfigurationError(
                f"truth mode supports strong_abs and l2_vector, not {metric!r}"
            )
        exact = sweep.exact[ok]
        pairs = []
        for delta, states in zip(sweep.deltas, sweep.terminal):
            if metric == "l2_vector":
                err = float(np.mean(np.linalg.norm(states[ok] - exact, axis=1)))
            else:
                f_num = _functional_values(states[ok], functional)
                f_ref = _functional_values(exact, functional)
                err = float(np.mean(np.abs(f_num - f_ref)))
            pairs.append((delta, err))
        return pairs
    if mode != "coupled":
        raise ConfigurationError(f"unknown mode {mode!r}; use truth or coupled")
    pairs = []
    for r in range(len(sweep.deltas) - 1):
        coarse, fine = sweep.terminal[r][ok], sweep.terminal[r + 1][ok]
        if metric == "strong_abs":
            f_c = _functional_values(coarse, functional)
            f_f = _functional_values(fine, functional)
            err = float(np.mean(np.abs(f_c - f_f)))
        elif metric == "weak_mean":
            f_c = _functional_values(coarse, functional)
            f_f = _functional_values(fine, functional)
            err = float(np.abs(np.mean(f_c) - np.mean(f_f)))
        elif metric == "mse":
            f_c = _functional_values(coarse, functional)
            f_f = _functional_values(fine, functional)
            err = float(np.mean((f_c - f_f) ** 2))
        elif metric == "l2_vector":
            err = float(np.mean(np.linalg.norm(coarse - fine, axis=1)))
        else:
            raise ConfigurationError(f"unknown metric {metric!r}")
        pairs.append((sweep.deltas[r], err))
    return pairs


def error_vs_truth(runner, cfg: StudyConfig, master_seed: int,
                   functional=None):
    """Per-level strong errors against the exact solution (one sweep)."""
    sweep = run_sweep(runner, cfg, master_seed)
    return level_errors(sweep, "truth", cfg.metric if cfg.metric == "l2_vector"
                        else "strong_abs", functional)


def error_coupled_strong(runner, cfg, master_seed, functional=None):
    """Mean absolute difference between consecutive grid levels."""
    sweep = run_sweep(runner, cfg, master_seed)
    return level_errors(sweep, "coupled", "strong_abs", functional)


def error_coupled_weak(runner, cfg, master_seed, functional=None):
    """Absolute difference of level means (weak-order estimator)."""
    sweep = run_sweep(runner, cfg, master_seed)
    return level_errors(sweep, "coupled", "weak_mean", functional)


def error_coupled_mse(runner, cfg, master_seed, functional=None):
    """Mean squared difference between consecutive grid levels."""
    sweep = run_sweep(runner, cfg, master_seed)
    return level_errors(sweep, "coupled", "mse", functional)


def fit_rate(levels: Sequence, divergent: int = 0) -> RateReport:
    """Least-squares fit of log(error) = log_c + gamma * log(delta)."""
    pairs = [(float(d), float(e)) for d, e in levels]
    if len(pairs) < 3:
        raise DegenerateDataError(f"need at least 3 levels to fit, got {len(pairs)}")
    errors = np.array([e for _, e in pairs])
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise DegenerateDataError("level errors must be positive and finite")
    x = np.log([d for d, _ in pairs])
    y = np.log(errors)
    gamma, log_c = np.polyfit(x, y, 1)
    resid = y - (gamma * x + log_c)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    monotone = bool(np.all(np.diff(errors) < 0))
    return RateReport(levels=pairs, gamma=float(gamma), log_c=float(log_c),
                      r_squared=r_squared, divergent=divergent, monotone=monotone)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_levels_csv(pairs, fileobj) -> None:
    """Emit per-level errors as ``delta,error`` rows."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["delta", "error"])
    for delta, err in pairs:
        writer.writerow([_fmt(delta), _fmt(err)])


def write_summary_csv(rows, fileobj) -> None:
    """Emit fitted rates: one ``scheme,gamma,logC,r2,divergent`` row each."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["scheme", "gamma", "logC", "r2", "divergent"])
    for label, report in rows:
        writer.writerow([label, _fmt(report.gamma), _fmt(report.log_c),
                         _fmt(report.r_squared), report.divergent])
