"""Microscopic Kirman herding chain, simulated event by event.

Each agent in group ``i`` switches to group ``j`` with rate
``sigma[i, j] + h[i, j] * N_j`` where ``N_j`` is the current head count of
group ``j``. With ``h = 1`` the chain's time unit coincides with the scaled
time of the macroscopic n_f equation and ``sigma`` entries equal the scaled
rates epsilon.

Group 0 is always the fundamentalists; the reported series is ``N_0 / N``.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .sde import NOISE_BLOCK, SampledSeries

F, C = 0, 1
O, P = 1, 2


def two_state_rates(eps_cf: float, eps_fc: float, h: float = 1.0):
    """Fundamentalist/chartist reduction: returns ``(sigma, hmat)``."""
    sigma = np.zeros((2, 2))
    sigma[C, F] = eps_cf * h
    sigma[F, C] = eps_fc * h
    hmat = np.full((2, 2), float(h))
    np.fill_diagonal(hmat, 0.0)
    return sigma, hmat


def three_state_rates(eps_cf: float, eps_fc: float, eps_cc: float, H: float,
                      h: float = 1.0):
    """Fundamentalist/optimist/pessimist rates with the symmetric reductions.

    sigma_fo = sigma_fp = sigma_fc / 2, sigma_of = sigma_pf = sigma_cf,
    sigma_op = sigma_po = sigma_cc, and herding between optimists and
    pessimists is ``H`` times stronger than any other pair.
    """
    s_cf, s_fc, s_cc = eps_cf * h, eps_fc * h, eps_cc * H * h
    sigma = np.zeros((3, 3))
    sigma[F, O] = sigma[F, P] = s_fc / 2.0
    sigma[O, F] = sigma[P, F] = s_cf
    sigma[O, P] = sigma[P, O] = s_cc
    hmat = np.full((3, 3), float(h))
    hmat[O, P] = hmat[P, O] = H * h
    np.fill_diagonal(hmat, 0.0)
    return sigma, hmat


def simulate_agent_chain(N: int, sigma, hmat, T: float, sample_dt: float, seed: int,
                         initial=None) -> SampledSeries:
    """Gillespie simulation of ``N`` agents sampled every ``sample_dt``.

    ``initial`` is a vector of head counts summing to ``N``; by default the
    agents are spread as evenly as possible over the groups.
    """
    sigma = np.asarray(sigma, dtype=float)
    hmat = np.asarray(hmat, dtype=float)
    K = sigma.shape[0]
    if N < 2:
        raise ValueError("need at least two agents")
    if sigma.shape != (K, K) or hmat.shape != (K, K):
        raise ValueError("sigma and hmat must be square and of equal size")
    if np.any(sigma < 0) or np.any(hmat < 0):
        raise ValueError("rates must be nonnegative")
    if not (T > 0 and sample_dt > 0):
        raise ValueError("T and sample_dt must be positive")
    if initial is None:
        counts = np.full(K, N // K, dtype=np.int64)
        counts[: N - counts.sum()] += 1
    else:
        counts = np.asarray(initial, dtype=np.int64).copy()
        if counts.shape != (K,) or counts.sum() != N or np.any(counts < 0):
            raise ValueError(f"initial counts must be {K} nonnegative integers summing to N")
    n_out = int(math.floor(T / sample_dt + 1e-9)) + 1
    rng = np.random.default_rng(seed)
    out = np.empty(n_out)
    t, next_k, opos = 0.0, 0, 0
    x0 = counts[0] / N
    while True:
        ebuf = rng.standard_exponential(NOISE_BLOCK)
        ubuf = rng.random(NOISE_BLOCK)
        t, next_k, _, opos, status = kernels.chain_run(
            counts, t, next_k, sample_dt, sigma, hmat, ebuf, ubuf, 0, out, opos)
        if status == kernels.OUT_FULL:
            break
    meta = {"N": N, "sigma": sigma.tolist(), "h": hmat.tolist(), "n_f0": x0}
    return SampledSeries(out, sample_dt, seed=seed, meta=meta)


def birth_death_stationary(N: int, eps_cf: float, eps_fc: float, h: float = 1.0) -> np.ndarray:
    """Exact stationary law of the two-state chain as probabilities of N_f = 0..N."""
    k = np.arange(N)
    up = (N - k) * (eps_cf * h + h * k)            # k -> k+1
    down = (k + 1) * (eps_fc * h + h * (N - k - 1))  # k+1 -> k
    logp = np.concatenate([[0.0], np.cumsum(np.log(up) - np.log(down))])
    p = np.exp(logp - logp.max())
    return p / p.sum()
