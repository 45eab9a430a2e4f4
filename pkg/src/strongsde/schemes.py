"""One-step and whole-path integrators for Ito SDEs.

Scalar and multidimensional Euler-Maruyama and Milstein schemes, plus the
commutative- and diagonal-noise Milstein specializations that avoid mixed
double integrals.  Coefficient callbacks receive ``(t, x)`` with ``x``
carrying arbitrary leading batch axes and must evaluate elementwise, so
one code path serves both single-path simulation and the batched Monte
Carlo runner.

Within a step the update is accumulated in a fixed order (drift, then
diffusion terms in channel order, then corrections in lexicographic
``(j1, j2)`` order) so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .iterint import (
    DoubleIntegralMethod,
    EmIc0,
    EmKloeden,
    FourierAux,
    LevyFourier,
    MilsteinL0,
    diagonal_exact,
    em_ic0,
    em_kloeden,
    levy_fourier_pair,
    milstein_l0,
)
from .wiener import KIND_AUX, KIND_SUBDIV, SeedPath, TimeGrid, WienerSegment

__all__ = [
    "ScalarSde",
    "MultiSde",
    "PathResult",
    "euler_scalar",
    "milstein_scalar",
    "euler_md",
    "milstein_md",
    "milstein_commutative_step",
    "milstein_diagonal_step",
    "NOISE_STRUCTURES",
]

NOISE_STRUCTURES = ("general", "commutative", "diagonal", "additive")


@dataclass
class ScalarSde:
    """Coefficients of a one-dimensional Ito SDE dX = a dt + b dW.

    ``milstein`` is the correction coefficient b * db/dx, supplied
    analytically by the model (numerical differentiation would pollute
    convergence measurements).  ``exact_solution(t, w, x0)`` maps the
    running Wiener value to the closed-form solution when one exists.
    """

    drift: Callable
    diffusion: Callable
    milstein: Callable | None = None
    exact_solution: Callable | None = None


@dataclass
class MultiSde:
    """Coefficients of a d-dimensional SDE driven by m Wiener channels.

    ``drift(t, x) -> (..., d)`` and ``diffusion(t, x) -> (..., d, m)``.
    ``milstein_coeffs`` maps a channel pair (j1, j2) to the coefficient
    function for the corresponding double integral, returning (..., d);
    identically zero pairs may simply be omitted.  ``noise_structure``
    selects the update rule: "general" needs a mixed-integral method,
    "commutative"/"diagonal" use the closed forms, "additive" reduces to
    Euler-Maruyama.
    """

    d: int
    m: int
    drift: Callable
    diffusion: Callable
    milstein_coeffs: dict = field(default_factory=dict)
    noise_structure: str = "general"

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ConfigurationError(f"need d, m >= 1, got d={self.d}, m={self.m}")
        if self.noise_structure not in NOISE_STRUCTURES:
            raise ConfigurationError(
                f"unknown noise structure {self.noise_structure!r}; "
                f"use one of {NOISE_STRUCTURES}"
            )
        if self.noise_structure == "diagonal" and self.d != self.m:
            raise ConfigurationError("diagonal noise requires d == m")
        for j1, j2 in self.milstein_coeffs:
            if not (0 <= j1 < self.m and 0 <= j2 < self.m):
                raise ConfigurationError(f"coefficient pair {(j1, j2)} out of range")


@dataclass
class PathResult:
    """A simulated trajectory: states[n] approximates X(t_n)."""

    grid: TimeGrid
    states: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def terminal(self):
        return self.states[-1]


class BatchOutcome(NamedTuple):
    """Result of driving a batch of paths (one lane per replicate)."""

    terminal: np.ndarray          # (B, d)
    ok: np.ndarray                # (B,) bool
    first_bad: np.ndarray         # (B,) first non-finite step, -1 when ok
    states: np.ndarray | None     # (B, N+1, d) when the path is kept


@dataclass(frozen=True)
class SeedContext:
    """Per-lane seed identity used to derive in-step auxiliary streams."""

    master_seed: int
    replicates: np.ndarray
    level: int

    @classmethod
    def from_segment(cls, seg: WienerSegment) -> "SeedContext | None":
        if seg.seeds is None:
            return None
        return cls(seg.seeds.master_seed, np.array([seg.seeds.replicate]), seg.seeds.level)


def _pair_key(j1: int, j2: int, m: int) -> int:
    return j1 * m + j2


def pair_integrals_step(method, dw1, dw2, w_start2, dt, ctx, step, pair_key):
    """Both mixed integrals of one channel pair at one step, batched.

    ``dw1``/``dw2``/``w_start2`` are (B,) lane arrays.  Subdivision
    methods draw the two channels' bridge sub-increments from one stream
    per (replicate, pair, level, step); the Fourier method draws its
    auxiliary variables the same way.  Returns (i12, i21) lane arrays;
    the indirect integral always comes from the pairing identity
    i12 + i21 = dw1 * dw2.
    """
    n_lanes = dw1.shape[0]
    if isinstance(method, LevyFourier):
        p = method.p
        flat = np.empty((n_lanes, 2 * (2 * p + 1)))
        for i in range(n_lanes):
            gen = SeedPath(ctx.master_seed, replicate=int(ctx.replicates[i]),
                           kind=KIND_AUX, channel=pair_key, level=ctx.level,
                           node=step).generator()
            flat[i] = gen.standard_normal(2 * (2 * p + 1))
        aux = FourierAux(flat[:, :2],
                         flat[:, 2:2 + 2 * p].reshape(n_lanes, 2, p),
                         flat[:, 2 + 2 * p:].reshape(n_lanes, 2, p))
        pair = levy_fourier_pair(dw1, dw2, dt, p, aux=aux)
        return pair.i12, pair.i21
    n_k = method.n_k
    delta = dt / n_k
    sqrt_delta = np.sqrt(delta)
    if n_k == 1:
        sub = np.stack([dw1, dw2], axis=1)[:, :, None]
    else:
        z = np.empty((n_lanes, 2, n_k))
        for i in range(n_lanes):
            gen = SeedPath(ctx.master_seed, replicate=int(ctx.replicates[i]),
                           kind=KIND_SUBDIV, channel=pair_key, level=ctx.level,
                           node=step).generator()
            z[i] = gen.standard_normal((2, n_k))
        z *= sqrt_delta
        dw = np.stack([dw1, dw2], axis=1)
        z -= ((z.sum(axis=2) - dw) / n_k)[:, :, None]
        sub = z
    sub1, sub2 = sub[:, 0], sub[:, 1]
    if isinstance(method, EmKloeden):
        i21 = em_kloeden(sub1, sub2, w_start2)
    elif isinstance(method, EmIc0):
        i21 = em_ic0(sub1, sub2)
    elif isinstance(method, MilsteinL0):
        i21 = milstein_l0(sub1, sub2)
    else:
        raise ConfigurationError(f"unsupported double-integral method {method!r}")
    return dw1 * dw2 - i21, i21


def _drive_scalar(sde, x0, dw, grid, kind, keep_path):
    """Shared scalar driver; dw has shape (B, N)."""
    n_lanes, n_steps = dw.shape
    dt = grid.dt
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_lanes,)))
    states = None
    if keep_path:
        states = np.empty((n_lanes, n_steps + 1))
        states[:, 0] = x
    first_bad = np.full(n_lanes, -1, dtype=np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            t = grid.t0 + n * dt
            dwn = dw[:, n]
            x_next = x + sde.drift(t, x) * dt + sde.diffusion(t, x) * dwn
            if kind == "milstein":
                x_next = x_next + sde.milstein(t, x) * diagonal_exact(dwn, dt)
            x = x_next
            bad = ~np.isfinite(x) & (first_bad < 0)
            if bad.any():
                first_bad[bad] = n
            if keep_path:
                states[:, n + 1] = x
    ok = first_bad < 0
    return BatchOutcome(x[:, None], ok, first_bad, states[:, :, None] if keep_path else None)


def _drive_multi(sde, x0, dw, grid, kind, method, ctx, keep_path):
    """Shared multidimensional driver; dw has shape (B, m, N)."""
    n_lanes, m, n_steps = dw.shape
    if m != sde.m:
        raise ConfigurationError(f"segment has {m} channels, SDE needs {sde.m}")
    dt = grid.dt
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_lanes, sde.d)))
    states = None
    if keep_path:
        states = np.empty((n_lanes, n_steps + 1, sde.d))
        states[:, 0] = x
    first_bad = np.full(n_lanes, -1, dtype=np.int64)

    structure = sde.noise_structure
    milstein = kind == "milstein"
    if milstein and structure == "additive":
        milstein = False  # all double-integral terms vanish
    coeff_keys = sorted(sde.milstein_coeffs) if milstein else []
    offdiag_pairs = sorted({(min(a, b), max(a, b)) for a, b in coeff_keys if a != b})
    needs_method = milstein and structure == "general" and offdiag_pairs
    if needs_method and method is None:
        raise ConfigurationError(
            "general noise with off-diagonal correction terms needs a "
            "double-integral method"
        )
    if needs_method and ctx is None:
        raise ConfigurationError(
            "segment carries no seeds; mixed-integral draws would not be reproducible"
        )
    w_run = np.zeros((n_lanes, m)) if needs_method else None

    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            t = grid.t0 + n * dt
            dwn = dw[:, :, n]
            x_next = x + sde.drift(t, x) * dt
            bmat = sde.diffusion(t, x)
            for j in range(m):
                x_next = x_next + bmat[..., j] * dwn[:, j][:, None]
            if milstein:
                integrals = {}
                if structure == "general":
                    for j1, j2 in offdiag_pairs:
                        i12, i21 = pair_integrals_step(
                            method, dwn[:, j1], dwn[:, j2],
                            w_run[:, j2] if w_run is not None else None,
                            dt, ctx, n, _pair_key(j1, j2, m))
                        integrals[(j1, j2)] = i12
                        integrals[(j2, j1)] = i21
                for j1, j2 in coeff_keys:
                    if j1 == j2:
                        i_val = diagonal_exact(dwn[:, j1], dt)
                    elif structure == "general":
                        i_val = integrals[(j1, j2)]
                    else:
                        # commutative closed form: the pair only enters
                        # through i12 + i21 = dw1*dw2, split evenly
                        i_val = 0.5 * dwn[:, j1] * dwn[:, j2]
                    x_next = x_next + sde.milstein_coeffs[(j1, j2)](t, x) * i_val[:, None]
            if w_run is not None:
                w_run = w_run + dwn
            x = x_next
            bad = ~np.isfinite(x).all(axis=1) & (first_bad < 0)
            if bad.any():
                first_bad[bad] = n
            if keep_path:
                states[:, n + 1] = x
    ok = first_bad < 0
    return BatchOutcome(x, ok, first_bad, states)


def _single_path(outcome: BatchOutcome, grid: TimeGrid) -> PathResult:
    if not outcome.ok[0]:
        raise DivergenceError(int(outcome.first_bad[0]))
    return PathResult(grid, outcome.states[0])


def euler_scalar(sde: ScalarSde, x0: float, seg: WienerSegment) -> PathResult:
    """Euler-Maruyama recursion X <- X + a dt + b dW on one channel."""
    if seg.m != 1:
        raise ConfigurationError(f"scalar scheme needs a 1-channel segment, got {seg.m}")
    out = _drive_scalar(sde, x0, seg.increments, seg.grid, "euler", keep_path=True)
    result = _single_path(out, seg.grid)
    result.states = result.states[:, 0]
    return result


def milstein_scalar(sde: ScalarSde, x0: float, seg: WienerSegment) -> PathResult:
    """Milstein recursion with the exact diagonal correction term."""
    if seg.m != 1:
        raise ConfigurationError(f"scalar scheme needs a 1-channel segment, got {seg.m}")
    if sde.milstein is None:
        raise ConfigurationError("ScalarSde carries no Milstein coefficient")
    out = _drive_scalar(sde, x0, seg.increments, seg.grid, "milstein", keep_path=True)
    result = _single_path(out, seg.grid)
    result.states = result.states[:, 0]
    return result


def euler_md(sde: MultiSde, x0, seg: WienerSegment) -> PathResult:
    """Componentwise Euler-Maruyama for d states and m channels."""
    dw = seg.increments[None, :, :]
    out = _drive_multi(sde, np.asarray(x0, dtype=np.float64)[None, :], dw, seg.grid,
                       "euler", None, None, keep_path=True)
    return _single_path(out, seg.grid)


def milstein_md(sde: MultiSde, x0, seg: WienerSegment,
                method: DoubleIntegralMethod | None = None) -> PathResult:
    """Multidimensional Milstein step with pluggable mixed integrals.

    Diagonal double integrals always use the exact formula; off-diagonal
    ones use ``method`` (ignored for commutative/diagonal/additive noise,
    where the closed forms apply).
    """
    dw = seg.increments[None, :, :]
    ctx = SeedContext.from_segment(seg)
    out = _drive_multi(sde, np.asarray(x0, dtype=np.float64)[None, :], dw, seg.grid,
                       "milstein", method, ctx, keep_path=True)
    return _single_path(out, seg.grid)


def milstein_commutative_step(sde: MultiSde, t, x, dw, dt):
    """One step of the commutative-noise Milstein update.

    Off-diagonal corrections enter only through the symmetric combination
    i12 + i21 = dw1*dw2, which is exact; no integral approximation is
    involved.  ``x`` is (..., d) and ``dw`` is (..., m).
    """
    if sde.noise_structure != "commutative":
        raise ConfigurationError(
            f"commutative step applied to {sde.noise_structure!r} noise"
        )
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    x_next = x + sde.drift(t, x) * dt
    bmat = sde.diffusion(t, x)
    for j in range(sde.m):
        x_next = x_next + bmat[..., j] * dw[..., j][..., None]
    for j1, j2 in sorted(sde.milstein_coeffs):
        if j1 == j2:
            i_val = diagonal_exact(dw[..., j1], dt)
        else:
            i_val = 0.5 * dw[..., j1] * dw[..., j2]
        x_next = x_next + sde.milstein_coeffs[(j1, j2)](t, x) * i_val[..., None]
    return x_next


def milstein_diagonal_step(sde: MultiSde, t, x, dw, dt):
    """One step of the diagonal-noise Milstein update (decoupled channels)."""
    if sde.noise_structure != "diagonal":
        raise ConfigurationError(
            f"diagonal step applied to {sde.noise_structure!r} noise"
        )
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    x_next = x + sde.drift(t, x) * dt
    bmat = sde.diffusion(t, x)
    for j in range(sde.m):
        x_next = x_next + bmat[..., j] * dw[..., j][..., None]
    for j in range(sde.m):
        coeff = sde.milstein_coeffs.get((j, j))
        if coeff is not None:
            x_next = x_next + coeff(t, x) * diagonal_exact(dw[..., j], dt)[..., None]
    return x_next
