"""Monte Carlo experiments on the mixed-integral approximations.

Each experiment draws paths in fixed-size chunks, one RNG stream per
chunk, and reduces in chunk order, so the output is reproducible from
the master seed alone and independent of the worker count.

* ``figure5_rows``   -- pairing-identity error of the two Euler-recursion
  variants over the first few time intervals of a path; shows that the
  running-value initial condition fails away from the first interval
  while zero initial values converge everywhere.
* ``figure6_rows``   -- mean absolute error of all four methods against
  the fine-grid reference on the last interval of a path.
* ``mse_law_rows``   -- mean-square error of the subdivision recursions
  against the fine-grid reference, normalized by dt*delta (laws: 1/2 for
  the Euler recursion, 1/4 for the Milstein recursion).
* ``levy_rate_rows`` -- mean-square error of the Fourier approximation,
  coupled to the reference path through its bridge functionals; decays
  like 1/p.
"""

from __future__ import annotations

import numpy as np

from ._pool import map_chunks
from .errors import ConfigurationError
from .iterint import (
    bridge_fourier_aux,
    em_ic0,
    em_kloeden,
    levy_fourier_pair,
    milstein_l0,
    reference_oracle,
)
from .wiener import KIND_EXPERIMENT, SeedPath

__all__ = ["figure5_rows", "figure6_rows", "mse_law_rows", "levy_rate_rows"]

# Experiment ids (the channel field of the chunk streams).
_EXP_FIG5 = 1
_EXP_FIG6 = 2
_EXP_MSE = 3
_EXP_LEVY = 4

# Fixed chunk sizes; part of each experiment's definition.
_CHUNK_FIG5 = 500
_CHUNK_FIG6 = 250
_CHUNK_MSE = 100
_CHUNK_LEVY = 100


def _chunk_stream(master_seed, exp_id, lo, chunk_size):
    return SeedPath(master_seed, replicate=lo // chunk_size, kind=KIND_EXPERIMENT,
                    channel=exp_id).generator()


def _block_sum(x, factor):
    """Sum the trailing axis in blocks of ``factor``."""
    shape = x.shape[:-1] + (x.shape[-1] // factor, factor)
    return x.reshape(shape).sum(axis=-1)


def _fig5_chunk(payload, lo, hi):
    gen = _chunk_stream(payload["master_seed"], _EXP_FIG5, lo, _CHUNK_FIG5)
    n_int = payload["n_intervals"]
    n_fine = payload["n_fine"]
    dt = payload["dt"]
    n_lanes = hi - lo
    fine = gen.standard_normal((n_lanes, n_int, 2, n_fine)) * np.sqrt(dt / n_fine)
    dw = fine.sum(axis=-1)                      # (B, n_int, 2)
    w_start = np.cumsum(dw, axis=1) - dw        # running value at interval start
    sums = {}
    for nk in payload["nk_list"]:
        coarse = _block_sum(fine, n_fine // nk)
        c1, c2 = coarse[:, :, 0, :], coarse[:, :, 1, :]
        product = dw[:, :, 0] * dw[:, :, 1]
        pair_ic0 = em_ic0(c1, c2) + em_ic0(c2, c1)
        pair_kl = (em_kloeden(c1, c2, w_start[:, :, 1])
                   + em_kloeden(c2, c1, w_start[:, :, 0]))
        sums[("em_ic0", nk)] = np.abs(product - pair_ic0).sum(axis=0)
        sums[("em_kloeden", nk)] = np.abs(product - pair_kl).sum(axis=0)
    return sums


def figure5_rows(master_seed, dt=0.0625, n_paths=5000, n_intervals=5,
                 nk_exponents=range(1, 10), workers=1):
    """Mean pairing-identity error per interval and subdivision count.

    Returns rows (method, interval, n_k, mean_abs_pairing_error).  The
    pairing identity i12 + i21 = dW1*dW2 holds for the true integrals;
    its defect measures how far each Euler-recursion variant is from
    approximating them.
    """
    nk_list = [2**k for k in nk_exponents]
    payload = {"master_seed": master_seed, "dt": dt, "n_intervals": n_intervals,
               "n_fine": max(nk_list), "nk_list": nk_list}
    results = map_chunks(_fig5_chunk, payload, n_paths, _CHUNK_FIG5, workers)
    rows = []
    for method in ("em_kloeden", "em_ic0"):
        for nk in nk_list:
            total = sum(res[(method, nk)] for res in results)
            for interval in range(n_intervals):
                rows.append((method, interval, nk, total[interval] / n_paths))
    return rows


def _fig6_chunk(payload, lo, hi):
    gen = _chunk_stream(payload["master_seed"], _EXP_FIG6, lo, _CHUNK_FIG6)
    dt = payload["dt"]
    n_prior = payload["n_prior"]
    n_fine = payload["n_fine"]
    n_lanes = hi - lo
    prior = gen.standard_normal((n_lanes, 2, n_prior)) * np.sqrt(dt)
    w_start = prior.sum(axis=-1)                    # (B, 2) at the last interval
    fine = gen.standard_normal((n_lanes, 2, n_fine)) * np.sqrt(dt / n_fine)
    i21_ref = reference_oracle(fine[:, 0], fine[:, 1]).i21
    dw1, dw2 = fine[:, 0].sum(axis=-1), fine[:, 1].sum(axis=-1)
    sums = {}
    for nk in payload["nk_list"]:
        c1 = _block_sum(fine[:, 0], n_fine // nk)
        c2 = _block_sum(fine[:, 1], n_fine // nk)
        sums[("milstein_l0", nk)] = np.abs(milstein_l0(c1, c2) - i21_ref).sum()
        sums[("em_ic0", nk)] = np.abs(em_ic0(c1, c2) - i21_ref).sum()
        sums[("em_kloeden", nk)] = np.abs(
            em_kloeden(c1, c2, w_start[:, 1]) - i21_ref).sum()
    for nk in payload["nk_list"]:
        pair = levy_fourier_pair(dw1, dw2, dt, p=nk, rng=gen)
        sums[("levy_fourier", nk)] = np.abs(pair.i21 - i21_ref).sum()
    return sums


def figure6_rows(master_seed, n_dt=32, k_exponents=range(1, 6), n_paths=4000,
                 oracle_factor=256, workers=1):
    """Mean absolute error versus the reference on the last interval.

    The three subdivision methods run at n_k = 2^k sub-steps; the Fourier
    method runs at p = n_k with fresh auxiliary draws.  Returns rows
    (method, k, n_k, delta, mean_abs_error).
    """
    dt = 1.0 / n_dt
    nk_list = [2**k for k in k_exponents]
    n_fine = max(nk_list) * oracle_factor
    payload = {"master_seed": master_seed, "dt": dt, "n_prior": n_dt - 1,
               "n_fine": n_fine, "nk_list": nk_list}
    results = map_chunks(_fig6_chunk, payload, n_paths, _CHUNK_FIG6, workers)
    rows = []
    for method in ("em_kloeden", "em_ic0", "milstein_l0", "levy_fourier"):
        for k, nk in zip(k_exponents, nk_list):
            total = sum(res[(method, nk)] for res in results)
            rows.append((method, k, nk, dt / nk, total / n_paths))
    return rows


def _mse_chunk(payload, lo, hi):
    gen = _chunk_stream(payload["master_seed"], _EXP_MSE, lo, _CHUNK_MSE)
    dt = payload["dt"]
    n_fine = payload["n_fine"]
    n_lanes = hi - lo
    fine = gen.standard_normal((n_lanes, 2, n_fine)) * np.sqrt(dt / n_fine)
    i21_ref = milstein_l0(fine[:, 0], fine[:, 1])
    sums = {}
    for nk in payload["nk_list"]:
        c1 = _block_sum(fine[:, 0], n_fine // nk)
        c2 = _block_sum(fine[:, 1], n_fine // nk)
        sums[("em_ic0", nk)] = ((em_ic0(c1, c2) - i21_ref) ** 2).sum()
        sums[("milstein_l0", nk)] = ((milstein_l0(c1, c2) - i21_ref) ** 2).sum()
    return sums


def mse_law_rows(master_seed, dt, nk_list, n_samples=10000, oracle_factor=256,
                 workers=1):
    """Mean-square error of the subdivision recursions, per n_k.

    The reference integral is the Milstein recursion on an
    ``oracle_factor``-times finer grid of the same path.  Returns rows
    (method, n_k, delta, mse, mse / (dt * delta)); the normalized values
    approach 1/2 (Euler recursion) and 1/4 (Milstein recursion).
    """
    nk_list = sorted(nk_list)
    n_fine = max(nk_list) * oracle_factor
    for nk in nk_list:
        if n_fine % nk:
            raise ConfigurationError(f"n_k={nk} does not divide the fine grid {n_fine}")
    payload = {"master_seed": master_seed, "dt": dt, "n_fine": n_fine,
               "nk_list": nk_list}
    results = map_chunks(_mse_chunk, payload, n_samples, _CHUNK_MSE, workers)
    rows = []
    for method in ("em_ic0", "milstein_l0"):
        for nk in nk_list:
            mse = sum(res[(method, nk)] for res in results) / n_samples
            delta = dt / nk
            rows.append((method, nk, delta, mse, mse / (dt * delta)))
    return rows


def _levy_chunk(payload, lo, hi):
    gen = _chunk_stream(payload["master_seed"], _EXP_LEVY, lo, _CHUNK_LEVY)
    dt = payload["dt"]
    n_fine = payload["n_fine"]
    n_lanes = hi - lo
    fine = gen.standard_normal((n_lanes, 2, n_fine)) * np.sqrt(dt / n_fine)
    i12_ref = reference_oracle(fine[:, 0], fine[:, 1]).i12
    dw1, dw2 = fine[:, 0].sum(axis=-1), fine[:, 1].sum(axis=-1)
    sums = {}
    for p in payload["p_list"]:
        aux = bridge_fourier_aux(fine[:, 0], fine[:, 1], dt, p)
        i12_p = levy_fourier_pair(dw1, dw2, dt, p, aux=aux).i12
        sums[p] = ((i12_p - i12_ref) ** 2).sum()
    return sums


def levy_rate_rows(master_seed, dt, p_list=(4, 8, 16, 32, 64), n_samples=10000,
                   n_fine=8192, workers=1):
    """Mean-square error of the path-coupled Fourier approximation per p.

    The auxiliary variables are computed from the reference path itself,
    so the error is pure truncation error and follows the 1/p law.
    Returns rows (p, mse).
    """
    payload = {"master_seed": master_seed, "dt": dt, "n_fine": n_fine,
               "p_list": list(p_list)}
    results = map_chunks(_levy_chunk, payload, n_samples, _CHUNK_LEVY, workers)
    return [(p, sum(res[p] for res in results) / n_samples) for p in p_list]
