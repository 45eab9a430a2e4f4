"""Approximation of the mixed double Ito integral over one step.

The diagonal integral has the exact value (dW^2 - dt)/2.  The
off-diagonal integral I_(1,2) = int int dW^1 dW^2 has no closed form;
this module provides four approximations:

* ``LevyFourier``  -- truncated Fourier expansion of the Brownian bridge
  (truncation level p, plus 2(2p+1) auxiliary Gaussians per pair);
* ``EmKloeden``    -- Euler recursion on the auxiliary system
  dY1 = Y2 dW1, dY2 = dW2 started from Y2 = W^2(t_n) (kept for its
  known failure away from the first step);
* ``EmIc0``        -- the same recursion started from zero initial values,
  mean-square error (1/2) dt delta;
* ``MilsteinL0``   -- the recursion with the extra (1/2) dW1 dW2 term and
  the sub-step Levy area set to zero, mean-square error (1/4) dt delta.

The recursions are written as reductions over the trailing axis, so a
batch of subdivisions evaluates in one call.

For testing there is no observable "true" integral; ``reference_oracle``
stands in for it by running ``MilsteinL0`` on a much finer bridge grid of
the same path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "DoubleIntegralMethod",
    "LevyFourier",
    "EmKloeden",
    "EmIc0",
    "MilsteinL0",
    "IntegralPair",
    "diagonal_exact",
    "sample_dw_dz",
    "rho_coefficient",
    "levy_fourier_pair",
    "bridge_fourier_aux",
    "FourierAux",
    "em_kloeden",
    "em_ic0",
    "milstein_l0",
    "reference_oracle",
    "method_from_spec",
]


@dataclass(frozen=True)
class DoubleIntegralMethod:
    """Base tag for the mixed-integral approximators."""

    @property
    def resolution(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class LevyFourier(DoubleIntegralMethod):
    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ConfigurationError(f"Fourier truncation level must be >= 1, got {self.p}")
        # rho_p = 1/12 - (1/2pi^2) sum 1/r^2 >= 0 since the sum is < pi^2/6
        assert rho_coefficient(self.p) >= 0.0

    @property
    def resolution(self) -> int:
        return self.p


@dataclass(frozen=True)
class _SubdivisionMethod(DoubleIntegralMethod):
    n_k: int

    def __post_init__(self):
        if self.n_k < 1:
            raise ConfigurationError(f"subdivision count must be >= 1, got {self.n_k}")

    @property
    def resolution(self) -> int:
        return self.n_k


@dataclass(frozen=True)
class EmKloeden(_SubdivisionMethod):
    pass


@dataclass(frozen=True)
class EmIc0(_SubdivisionMethod):
    pass


@dataclass(frozen=True)
class MilsteinL0(_SubdivisionMethod):
    pass


_METHOD_NAMES = {"levy_fourier": LevyFourier, "em_kloeden": EmKloeden,
                 "em_ic0": EmIc0, "milstein_l0": MilsteinL0}


def method_from_spec(name: str, resolution: int) -> DoubleIntegralMethod:
    """Build a method from its config name and resolution parameter."""
    try:
        cls = _METHOD_NAMES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown double-integral method {name!r}; use one of {sorted(_METHOD_NAMES)}"
        ) from None
    return cls(resolution)


@dataclass(frozen=True)
class IntegralPair:
    """Both mixed integrals of one channel pair over one step."""

    i12: float
    i21: float

    @property
    def levy_area(self):
        return self.i12 - self.i21


def diagonal_exact(dw, dt):
    """Exact diagonal double integral: (dw^2 - dt)/2."""
    return 0.5 * (np.asarray(dw) ** 2 - dt)


def sample_dw_dz(dt: float, rng: np.random.Generator, size=None):
    """Joint draw of (dW, dZ) over one step.

    dZ = int int dW ds is Gaussian with variance dt^3/3 and
    Cov(dW, dZ) = dt^2/2 (correlation sqrt(3)/2); sampled by
    conditioning dZ on dW.
    """
    if dt <= 0:
        raise ConfigurationError(f"step size must be positive, got {dt}")
    z1 = rng.standard_normal(size)
    z2 = rng.standard_normal(size)
    dw = np.sqrt(dt) * z1
    dz = 0.5 * dt * dw + np.sqrt(dt**3 / 12.0) * z2
    return dw, dz


def rho_coefficient(p: int) -> float:
    """Tail-variance coefficient rho_p = 1/12 - (1/2pi^2) sum_{r<=p} r^-2."""
    r = np.arange(1, p + 1)
    return 1.0 / 12.0 - np.sum(1.0 / (r * r)) / (2.0 * math.pi**2)


class FourierAux(NamedTuple):
    """Auxiliary Gaussian variables of the Fourier construction.

    ``mu`` has shape (..., 2); ``eta`` and ``zeta`` have shape (..., 2, p),
    indexed by channel then harmonic.  Fresh i.i.d. draws give the
    distributionally exact sampler; ``bridge_fourier_aux`` computes the
    same quantities as functionals of an explicit fine path, which couples
    the approximation to that path.
    """

    mu: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray


def _draw_aux(p: int, rng: np.random.Generator, batch_shape=()) -> FourierAux:
    flat = rng.standard_normal(batch_shape + (2 * (2 * p + 1),))
    mu = flat[..., :2]
    eta = flat[..., 2:2 + 2 * p].reshape(batch_shape + (2, p))
    zeta = flat[..., 2 + 2 * p:].reshape(batch_shape + (2, p))
    return FourierAux(mu, eta, zeta)


def levy_fourier_pair(dw1, dw2, dt, p, rng=None, aux=None):
    """Fourier approximation of the mixed integrals of one channel pair.

    Returns an IntegralPair whose ``i12`` follows the truncated bridge
    expansion and whose ``i21`` comes from the pairing identity
    i12 + i21 = dw1*dw2, so both integrals share one Levy-area draw.

    Exactly one of ``rng`` (fresh auxiliary draws) and ``aux`` (explicit
    FourierAux, e.g. from ``bridge_fourier_aux``) must be supplied.
    Accepts scalar or batched increments.
    """
    if p < 1:
        raise ConfigurationError(f"Fourier truncation level must be >= 1, got {p}")
    if (rng is None) == (aux is None):
        raise ConfigurationError("supply exactly one of rng and aux")
    dw1 = np.asarray(dw1, dtype=np.float64)
    dw2 = np.asarray(dw2, dtype=np.float64)
    if aux is None:
        aux = _draw_aux(p, rng, batch_shape=dw1.shape)
    sqrt_dt = np.sqrt(dt)
    xi1, xi2 = dw1 / sqrt_dt, dw2 / sqrt_dt
    rho = rho_coefficient(p)
    r = np.arange(1.0, p + 1.0)
    mu1, mu2 = aux.mu[..., 0], aux.mu[..., 1]
    eta1, eta2 = aux.eta[..., 0, :], aux.eta[..., 1, :]
    zeta1, zeta2 = aux.zeta[..., 0, :], aux.zeta[..., 1, :]
    series = np.sum(
        (zeta1 * (math.sqrt(2.0) * xi2[..., None] + eta2)
         - zeta2 * (math.sqrt(2.0) * xi1[..., None] + eta1)) / r,
        axis=-1,
    )
    i12 = dt * (0.5 * xi1 * xi2 + math.sqrt(rho) * (mu1 * xi2 - mu2 * xi1)) \
        + dt / (2.0 * math.pi) * series
    return IntegralPair(i12=i12, i21=dw1 * dw2 - i12)


def bridge_fourier_aux(fine1, fine2, dt, p) -> FourierAux:
    """Fourier functionals of an explicit fine-grid path.

    ``fine1``/``fine2`` hold the sub-increments of the two channels over
    one step of length ``dt`` (trailing axis = sub-steps; leading axes are
    batch).  Computes the bridge Fourier coefficients by left-endpoint
    quadrature and packs them, with the orientation used by
    ``levy_fourier_pair``, so that the formula evaluated with this aux
    reproduces the integral of the same path up to the truncation error
    of order dt^2/p.
    """
    fine1 = np.asarray(fine1, dtype=np.float64)
    fine2 = np.asarray(fine2, dtype=np.float64)
    n_fine = fine1.shape[-1]
    if n_fine < 4 * p:
        raise ConfigurationError(
            f"need at least 4*p={4*p} sub-steps to resolve harmonic {p}, got {n_fine}"
        )
    rho = rho_coefficient(p)
    s_frac = np.arange(n_fine) / n_fine  # left endpoints, as fractions of dt
    r = np.arange(1, p + 1)
    cos_basis = np.cos(2.0 * math.pi * np.outer(s_frac, r))
    sin_basis = np.sin(2.0 * math.pi * np.outer(s_frac, r))
    batch_shape = fine1.shape[:-1]
    mu = np.empty(batch_shape + (2,))
    eta = np.empty(batch_shape + (2, p))
    zeta = np.empty(batch_shape + (2, p))
    scale = math.pi * r * math.sqrt(2.0 / dt)
    for idx, fine in enumerate((fine1, fine2)):
        w_left = np.cumsum(fine, axis=-1) - fine  # W at left endpoints
        total = np.sum(fine, axis=-1, keepdims=True)
        bridge = w_left - s_frac * total
        a = (2.0 / n_fine) * (bridge @ cos_basis)  # = (2/dt) int B cos ds
        b = (2.0 / n_fine) * (bridge @ sin_basis)
        a0 = (2.0 / n_fine) * np.sum(bridge, axis=-1)
        tail = -0.5 * a0 - np.sum(a, axis=-1)
        # The sampler's (mu, eta, zeta) are the negated bridge functionals;
        # both orientations are N(0,1), only the coupling needs this one.
        mu[..., idx] = -tail / math.sqrt(dt * rho)
        eta[..., idx, :] = -b * scale
        zeta[..., idx, :] = -a * scale
    return FourierAux(mu, eta, zeta)


def _check_pair(sub1, sub2):
    sub1 = np.asarray(sub1, dtype=np.float64)
    sub2 = np.asarray(sub2, dtype=np.float64)
    if sub1.shape != sub2.shape:
        raise ConfigurationError(
            f"channel subdivisions differ in shape: {sub1.shape} vs {sub2.shape}"
        )
    return sub1, sub2


def _exclusive_prefix(sub):
    c = np.cumsum(sub, axis=-1)
    return c - sub


def em_kloeden(sub1, sub2, w_start_2):
    """Euler recursion for I_(2,1) started from the running value W^2(t_n).

    sub1/sub2 are the sub-increments of channels 1 and 2 over the step
    (trailing axis); ``w_start_2`` is the cumulative second-channel value
    at the start of the step.  Returns the terminal Y^1 of
    Y1 <- Y1 + Y2*dW1, Y2 <- Y2 + dW2 with Y2(0) = w_start_2.
    """
    sub1, sub2 = _check_pair(sub1, sub2)
    y2_before = np.asarray(w_start_2) + _exclusive_prefix(sub2)
    return np.sum(y2_before * sub1, axis=-1)


def em_ic0(sub1, sub2):
    """Euler recursion for I_(2,1) with zero initial values."""
    sub1, sub2 = _check_pair(sub1, sub2)
    return np.sum(_exclusive_prefix(sub2) * sub1, axis=-1)


def milstein_l0(sub1, sub2):
    """Milstein recursion for I_(2,1) with the sub-step Levy area set to zero.

    Adds (1/2) dW1 dW2 per sub-step to the zero-initial-value Euler
    recursion; the pairing identity i12 + i21 = dW1*dW2 then holds exactly
    (the cross terms telescope to the full product).
    """
    sub1, sub2 = _check_pair(sub1, sub2)
    return np.sum((_exclusive_prefix(sub2) + 0.5 * sub2) * sub1, axis=-1)


def reference_oracle(fine1, fine2) -> IntegralPair:
    """High-accuracy mixed integrals from a fine subdivision of one step.

    Runs ``milstein_l0`` in both channel orders on the supplied fine
    sub-increments (trailing axis; at least 64 of them), standing in for
    the unobservable true integrals.  Its own mean-square error is
    (1/4) dt delta_fine, far below the quantities measured against it,
    and its pairing identity is exact.
    """
    fine1, fine2 = _check_pair(fine1, fine2)
    if fine1.shape[-1] < 64:
        raise ConfigurationError(
            f"reference grid needs at least 64 sub-steps, got {fine1.shape[-1]}"
        )
    return IntegralPair(i12=milstein_l0(fine2, fine1), i21=milstein_l0(fine1, fine2))
