"""Multi-channel Wiener increments on uniform grids.

Every discretization level of a study is a view of one underlying Wiener
path: coarse grids are exact block sums of fine ones, and fine grids are
Brownian-bridge refinements of coarse ones.  All randomness is derived
from a counter-based generator (numpy Philox) keyed by a
``(master_seed, replicate, kind, channel, level, node)`` tuple, so any
piece of a path can be reproduced on demand, in any order, on any number
of workers.

Gaussian variates come from ``numpy.random.Generator.standard_normal``
(ziggurat); this choice is fixed so that identical seeds give identical
arrays across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, GridMismatchError

__all__ = [
    "TimeGrid",
    "SeedPath",
    "WienerSegment",
    "generate_segment",
    "coarsen",
    "refine_bridge",
    "subdivide_interval",
    "segment_to_csv",
    "KIND_PATH",
    "KIND_SUBDIV",
    "KIND_AUX",
    "KIND_EXPERIMENT",
]

# Stream kinds keep path generation, inner-step subdivisions, auxiliary
# draws (Fourier variables, (dW, dZ) sampling) and experiment chunks in
# disjoint key spaces.
KIND_PATH = 0
KIND_SUBDIV = 1
KIND_AUX = 2
KIND_EXPERIMENT = 3

# Bit widths of the packed Philox key word: kind|channel|level|replicate|node.
_KIND_BITS = 4
_CHANNEL_BITS = 12
_LEVEL_BITS = 8
_REPLICATE_BITS = 20
_NODE_BITS = 20


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``N`` steps on ``[t0, T]``."""

    t0: float
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError(f"step count must be >= 1, got {self.N}")
        if not self.T > self.t0:
            raise ConfigurationError(f"need T > t0, got t0={self.t0}, T={self.T}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.N

    def times(self) -> np.ndarray:
        """Grid nodes t_n = t0 + n*dt, shape (N+1,)."""
        return self.t0 + np.arange(self.N + 1) * self.dt

    def refined(self, k: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.N * k)

    def coarsened(self, k: int) -> "TimeGrid":
        if self.N % k != 0:
            raise GridMismatchError(f"factor {k} does not divide N={self.N}")
        return TimeGrid(self.t0, self.T, self.N // k)


@dataclass(frozen=True)
class SeedPath:
    """Address of one RNG stream in the reproducibility hierarchy.

    The mapping (master_seed, replicate, kind, channel, level, node) ->
    stream is injective (fields are packed into disjoint bits of the
    Philox key) and independent of execution order and thread count.
    """

    master_seed: int
    replicate: int = 0
    kind: int = KIND_PATH
    channel: int = 0
    level: int = 0
    node: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must fit in 64 bits")
        for name, value, bits in (
            ("kind", self.kind, _KIND_BITS),
            ("channel", self.channel, _CHANNEL_BITS),
            ("level", self.level, _LEVEL_BITS),
            ("replicate", self.replicate, _REPLICATE_BITS),
            ("node", self.node, _NODE_BITS),
        ):
            if not 0 <= value < 2**bits:
                raise ConfigurationError(
                    f"seed path field {name}={value} exceeds {bits} bits"
                )

    def _packed(self) -> int:
        word = self.kind
        word = (word << _CHANNEL_BITS) | self.channel
        word = (word << _LEVEL_BITS) | self.level
        word = (word << _REPLICATE_BITS) | self.replicate
        word = (word << _NODE_BITS) | self.node
        return word

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream address."""
        return np.random.Generator(
            np.random.Philox(key=np.array([self.master_seed, self._packed()],
                                          dtype=np.uint64))
        )

    def child(self, **changes) -> "SeedPath":
        return replace(self, **changes)


@dataclass
class WienerSegment:
    """Increments of an m-channel Wiener process on a uniform grid.

    ``increments`` has shape (m, N).  ``seeds`` records where the segment
    sits in the seed hierarchy so it can be refined or subdivided
    deterministically; segments assembled from raw arrays may leave it
    None, in which case refinement requires explicit seeds.
    """

    grid: TimeGrid
    increments: np.ndarray
    seeds: SeedPath | None = None
    _cumulative: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.increments = np.ascontiguousarray(self.increments, dtype=np.float64)
        if self.increments.ndim != 2:
            raise ConfigurationError("increments must be a 2-d (channels x steps) array")
        if self.increments.shape[1] != self.grid.N:
            raise ConfigurationError(
                f"increments have {self.increments.shape[1]} steps, grid has {self.grid.N}"
            )

    @property
    def m(self) -> int:
        return self.increments.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        """Running values W_{t_n} with W_{t0} = 0, shape (m, N+1)."""
        if self._cumulative is None:
            m, n = self.increments.shape
            out = np.zeros((m, n + 1))
            np.cumsum(self.increments, axis=1, out=out[:, 1:])
            self._cumulative = out
        return self._cumulative

    @property
    def terminal(self) -> np.ndarray:
        """W_T per channel, shape (m,)."""
        return self.cumulative[:, -1]


def generate_segment(seeds: SeedPath, m: int, grid: TimeGrid) -> WienerSegment:
    """Draw i.i.d. N(0, dt) increments for ``m`` independent channels.

    One stream per channel, keyed by ``seeds`` with the channel field
    substituted; bit-identical output for identical seeds.
    """
    if m < 1:
        raise ConfigurationError(f"channel count must be >= 1, got {m}")
    sqrt_dt = np.sqrt(grid.dt)
    inc = np.empty((m, grid.N))
    for c in range(m):
        gen = seeds.child(kind=KIND_PATH, channel=c, node=0).generator()
        inc[c] = gen.standard_normal(grid.N) * sqrt_dt
    return WienerSegment(grid, inc, seeds=seeds.child(kind=KIND_PATH, channel=0, node=0))


def coarsen(seg: WienerSegment, k: int) -> WienerSegment:
    """Merge every k consecutive increments into one, summing left to right.

    The output increment n is exactly sum(seg.increments[:, n*k : (n+1)*k])
    evaluated in index order, so coarse grids reproduce the block sums of
    the fine grid bit for bit.
    """
    if k == 1:
        return WienerSegment(seg.grid, seg.increments.copy(), seeds=seg.seeds)
    if k < 1 or seg.grid.N % k != 0:
        raise GridMismatchError(f"factor {k} does not divide N={seg.grid.N}")
    acc = seg.increments[:, 0::k].copy()
    for j in range(1, k):
        acc += seg.increments[:, j::k]
    new_seeds = None
    if seg.seeds is not None and seg.seeds.level > 0:
        new_seeds = seg.seeds.child(level=seg.seeds.level - 1)
    return WienerSegment(seg.grid.coarsened(k), acc, seeds=new_seeds)


def refine_bridge(seg: WienerSegment, k: int, seeds: SeedPath | None = None) -> WienerSegment:
    """Split every increment into k Brownian-bridge sub-increments.

    Conditional on a coarse increment dW over a step of length d, the k
    sub-increments are exchangeable Gaussians with mean dW/k, variance
    (d/k)(1 - 1/k) and pairwise covariance -(d/k)/k, constructed by
    recentring i.i.d. N(0, d/k) draws so they sum to dW exactly (up to
    one rounding of the left-to-right sum).  coarsen(refine_bridge(s, k), k)
    therefore reproduces s to floating-point accuracy.

    Child randomness is drawn from one stream per channel keyed at
    level + 1; within the stream, step n of the parent grid owns the
    contiguous slice [n*k, (n+1)*k), so a given parent step always
    receives the same sub-increments no matter how much of the path is
    materialized elsewhere.
    """
    if k == 1:
        return WienerSegment(seg.grid, seg.increments.copy(), seeds=seg.seeds)
    if k < 1:
        raise ConfigurationError(f"refinement factor must be >= 1, got {k}")
    if seeds is None:
        seeds = seg.seeds
    if seeds is None:
        raise ConfigurationError("segment carries no seeds; pass them explicitly")
    m, n = seg.increments.shape
    child_level = seeds.level + 1
    delta = seg.grid.dt / k
    sqrt_delta = np.sqrt(delta)
    out = np.empty((m, n * k))
    for c in range(m):
        gen = seeds.child(kind=KIND_PATH, channel=c, level=child_level, node=0).generator()
        z = gen.standard_normal(n * k).reshape(n, k) * sqrt_delta
        z -= ((z.sum(axis=1) - seg.increments[c]) / k)[:, None]
        out[c] = z.reshape(n * k)
    return WienerSegment(seg.grid.refined(k), out,
                         seeds=seeds.child(kind=KIND_PATH, channel=0, level=child_level, node=0))


def subdivide_interval(dw: np.ndarray, n_k: int, delta: float, seeds: SeedPath) -> np.ndarray:
    """Bridge sub-increments of one step, per channel.

    ``dw`` holds the parent increments (one per channel) over a step that
    the caller has divided into ``n_k`` pieces of length ``delta``.
    Returns an (m, n_k) array whose rows sum to ``dw`` exactly by
    construction: draw i.i.d. N(0, delta) values z and return
    z - (sum(z) - dw)/n_k.  Deterministic given ``seeds``.
    """
    if n_k < 1:
        raise ConfigurationError(f"subdivision count must be >= 1, got {n_k}")
    dw = np.atleast_1d(np.asarray(dw, dtype=np.float64))
    m = dw.shape[0]
    if n_k == 1:
        return dw[:, None].copy()
    gen = seeds.generator()
    z = gen.standard_normal((m, n_k)) * np.sqrt(delta)
    z -= ((z.sum(axis=1) - dw) / n_k)[:, None]
    return z


def segment_to_csv(seg: WienerSegment, fileobj) -> None:
    """Debug dump: one ``channel,step,increment`` row per entry."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["channel", "step", "increment"])
    for c in range(seg.m):
        for n in range(seg.grid.N):
            writer.writerow([c, n, format(seg.increments[c, n], ".17g")])
