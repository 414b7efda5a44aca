"""Brute-force enumeration over all 2^N spin states.

Enumeration is organised around the density of states: every state is binned
by its exact energy, and per-level sums of edge products and spins are kept.
Any Boltzmann expectation then reduces to a weighted sum over levels.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..model import IsingModel
from .stats import ReferenceStatistics

DEFAULT_CAP = 28
_CHUNK_BITS = 18


class EnumerationCapExceeded(ValueError):
    pass


def _check_cap(model: IsingModel, cap: int) -> None:
    if model.n_spins > cap:
        raise EnumerationCapExceeded(f"{model.n_spins} spins exceeds the enumeration cap of {cap}")


def all_states(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """States ``start..stop-1`` in binary order; bit ``i`` of the index is spin ``i`` (1 -> +1)."""
    stop = 2**n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def state_energies(model: IsingModel, cap: int = 24) -> np.ndarray:
    """Energy of every state, in :func:`all_states` order."""
    _check_cap(model, cap)
    x = all_states(model.n_spins).astype(np.float64)
    return (x[:, model.edge_i] * x[:, model.edge_j]) @ model.weights + x @ model.fields


def boltzmann_table(model: IsingModel, beta: float, cap: int = 24) -> np.ndarray:
    """Exact Boltzmann probability of every state, in :func:`all_states` order."""
    a = -beta * state_energies(model, cap)
    return np.exp(a - logsumexp(a))


def density_of_states(model: IsingModel, cap: int = DEFAULT_CAP):
    """Distinct energy levels with degeneracies and per-level sums.

    Returns ``(levels, degeneracy, edge_sums, spin_sums)`` where
    ``edge_sums[k, e]`` is the sum of ``x_i x_j`` for edge ``e`` over the states
    at level ``k`` and ``spin_sums[k, i]`` the sum of ``x_i``.
    """
    _check_cap(model, cap)
    n = model.n_spins
    total = 2**n
    chunk = min(total, 2**_CHUNK_BITS)
    acc: dict[float, list] = {}
    for start in range(0, total, chunk):
        x = all_states(n, start, start + chunk)
        pairs = x[:, model.edge_i] * x[:, model.edge_j]
        e = pairs.astype(np.float64) @ model.weights + x.astype(np.float64) @ model.fields
        levels, inverse = np.unique(e, return_inverse=True)
        order = np.argsort(inverse, kind="stable")
        starts = np.searchsorted(inverse[order], np.arange(len(levels)))
        counts = np.diff(np.append(starts, len(e)))
        es = np.add.reduceat(pairs[order].astype(np.int64), starts, axis=0) if model.n_edges else np.zeros((len(levels), 0))
        ss = np.add.reduceat(x[order].astype(np.int64), starts, axis=0)
        for k, lv in enumerate(levels):
            slot = acc.get(lv)
            if slot is None:
                acc[lv] = [int(counts[k]), es[k].copy(), ss[k].copy()]
            else:
                slot[0] += int(counts[k])
                slot[1] += es[k]
                slot[2] += ss[k]
    keys = sorted(acc)
    levels = np.array(keys, dtype=np.float64)
    deg = np.array([acc[k][0] for k in keys], dtype=np.float64)
    edge_sums = np.array([acc[k][1] for k in keys], dtype=np.float64).reshape(len(keys), model.n_edges)
    spin_sums = np.array([acc[k][2] for k in keys], dtype=np.float64).reshape(len(keys), n)
    return levels, deg, edge_sums, spin_sums


def exact_stats_enumeration(model: IsingModel, beta_grid, cap: int = DEFAULT_CAP) -> ReferenceStatistics:
    """Exact log Z, mean energy and edge correlations by summing over all states."""
    betas = np.asarray(beta_grid, dtype=np.float64)
    levels, deg, edge_sums, spin_sums = density_of_states(model, cap)
    logg = np.log(deg)
    a = logg[None, :] - betas[:, None] * levels[None, :]
    log_z = logsumexp(a, axis=1)
    # weight per state at each level: exp(-beta E) / Z
    w_state = np.exp(-betas[:, None] * levels[None, :] - log_z[:, None])
    energy = np.exp(a - log_z[:, None]) @ levels
    corr = w_state @ edge_sums
    mag = w_state @ spin_sums
    return ReferenceStatistics(
        beta_grid=betas,
        mean_energy=energy,
        edge_correlations=corr,
        log_z=log_z,
        method="exact-enum",
        magnetizations=mag,
        edges=np.stack([model.edge_i, model.edge_j], axis=1),
        energy_levels=levels,
        log_degeneracy=logg,
        metadata={"instance_hash": model.content_hash(), "n_spins": model.n_spins},
    )


def exact_sample_enumeration(model: IsingModel, beta: float, n_samples: int, seed=None, cap: int = 24) -> np.ndarray:
    """Exact Boltzmann samples by inverting the CDF of the enumerated distribution."""
    p = boltzmann_table(model, beta, cap)
    cdf = np.cumsum(p)
    rng = np.random.default_rng(seed)
    idx = np.searchsorted(cdf, rng.random(n_samples) * cdf[-1], side="right")
    idx = np.minimum(idx, len(p) - 1)
    bits = (idx[:, None] >> np.arange(model.n_spins, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)
