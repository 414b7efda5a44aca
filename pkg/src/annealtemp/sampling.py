"""Blocked Gibbs sampling, simulated thermal annealing, post-processing and parallel tempering.

Every spin update draws one standard-logistic variate ``l`` and sets the spin to
+1 iff ``l < -2 beta zeta_i``; this realizes the conditional Boltzmann
probability ``exp(-beta zeta_i x_i) / (2 cosh(beta zeta_i))`` exactly.

Annealed samples are independent chains.  Sample ``k`` of a run seeded with
``seed`` draws from its own stream ``SeedSequence(seed, spawn_key=(k,))``, so
results do not depend on how chains are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .model import IsingModel, SampleSet, as_spins, effective_fields, energy

#: default terminal inverse temperatures per problem class
BETA_T_DEFAULT = {"ran1": 3.54, "ac3": 4.82}
#: sweep counts minimizing time-to-solution (C12, C4, C2)
SWEEPS_TTS = {"C12": 12000, "C4": 4000, "C2": 2000}
#: sweep counts matching the hardware time per sample
SWEEPS_TIME_MATCHED = {"C12": 120, "C4": 40, "C2": 20}

_NOISE_BLOCK = 1 << 22


@dataclass(frozen=True)
class AnnealSchedule:
    """One inverse temperature per sweep."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if len(b) == 0:
            raise ValueError("empty schedule")
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("schedule betas must be finite and non-negative")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @classmethod
    def linear(cls, beta_terminal: float, n_sweeps: int) -> "AnnealSchedule":
        """``beta_s = beta_T (s-1)/(S-1)``: first sweep at 0, last at ``beta_T``."""
        if n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if n_sweeps == 1:
            return cls(np.array([float(beta_terminal)]))
        return cls(np.linspace(0.0, float(beta_terminal), int(n_sweeps)))

    @classmethod
    def constant(cls, beta: float, n_sweeps: int) -> "AnnealSchedule":
        return cls(np.full(int(n_sweeps), float(beta)))

    def __len__(self) -> int:
        return len(self.betas)

    def summary(self) -> dict:
        return {"n_sweeps": len(self), "beta_start": float(self.betas[0]), "beta_end": float(self.betas[-1])}


def conditional_flip_prob(zeta, beta):
    """Probability that a spin with effective field ``zeta`` takes the value +1."""
    return expit(-2.0 * np.asarray(beta, dtype=np.float64) * np.asarray(zeta, dtype=np.float64))


# -- colorings -----------------------------------------------------------


def validate_coloring(model: IsingModel, coloring) -> list[np.ndarray]:
    """Check that color classes partition the spins into independent sets."""
    classes = [np.asarray(c, dtype=np.int64).reshape(-1) for c in coloring]
    allv = np.concatenate(classes) if classes else np.zeros(0, dtype=np.int64)
    if len(allv) != model.n_spins or not np.array_equal(np.sort(allv), np.arange(model.n_spins)):
        raise ValueError("color classes must partition all spins")
    color = np.empty(model.n_spins, dtype=np.int64)
    for k, c in enumerate(classes):
        color[c] = k
    if np.any(color[model.edge_i] == color[model.edge_j]):
        raise ValueError("coloring is not an independent set partition")
    return classes


def default_coloring(model: IsingModel, graph=None) -> list[np.ndarray]:
    """Bipartition of a topology graph when available, otherwise greedy coloring."""
    if graph is not None and graph.n_nodes == model.n_spins:
        return validate_coloring(model, graph.color_classes())
    from .topology import greedy_coloring

    return validate_coloring(model, greedy_coloring(model))


def _flat_coloring(coloring):
    ptr = np.zeros(len(coloring) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(c) for c in coloring])
    idx = np.concatenate(coloring).astype(np.int64)
    return ptr, idx


def sample_stream(seed, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed), spawn_key=(int(index),))))


def _entropy(seed):
    if seed is None:
        raise ValueError("an explicit seed is required")
    return [int(s) for s in seed] if isinstance(seed, (tuple, list)) else int(seed)


# -- single sweeps ---------------------------------------------------------


def gibbs_sweep(model: IsingModel, state, beta: float, coloring, rng) -> np.ndarray:
    """One blocked-Gibbs sweep of a single state (pure numpy reference path).

    Classes are processed in the given order; each is resampled simultaneously
    from its conditional given the rest.  Draws the same noise as the compiled
    kernel, so both produce identical output from identical generators.
    """
    classes = validate_coloring(model, coloring)
    x = as_spins(state, model.n_spins).copy()
    if x.ndim != 1:
        raise ValueError("gibbs_sweep expects a single state")
    for cls in classes:
        noise = rng.logistic(size=len(cls))
        zeta = effective_fields(model, x)[cls]
        x[cls] = np.where(noise < -2.0 * beta * zeta, 1, -1)
    return x


def _kernel_args(model: IsingModel, coloring):
    cptr, cidx = _flat_coloring(coloring)
    return model.indptr, model.nbr, model.nbr_w, model.fields, cptr, cidx


def _anneal_one(args, betas: np.ndarray, x: np.ndarray, rng: np.random.Generator) -> None:
    n = len(x)
    block = max(1, _NOISE_BLOCK // n)
    for s0 in range(0, len(betas), block):
        part = betas[s0 : s0 + block]
        noise = rng.logistic(size=len(part) * n)
        _kernels.anneal_inplace(*args, part, x, noise)


# -- samplers --------------------------------------------------------------


def run_sta(
    model: IsingModel,
    schedule: AnnealSchedule,
    n_samples: int,
    coloring=None,
    seed=0,
    graph=None,
    sampler: str = "sta",
) -> SampleSet:
    """Simulated thermal annealing by blocked Gibbs sweeps.

    Each sample starts from a uniformly random state and receives one sweep per
    schedule entry, in order.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not isinstance(schedule, AnnealSchedule):
        schedule = AnnealSchedule(schedule)
    coloring = default_coloring(model, graph) if coloring is None else validate_coloring(model, coloring)
    args = _kernel_args(model, coloring)
    n = model.n_spins
    out = np.empty((n_samples, n), dtype=np.int8)
    for k in range(n_samples):
        rng = sample_stream(seed, k)
        x = (2 * rng.integers(0, 2, size=n) - 1).astype(np.float64)
        _anneal_one(args, schedule.betas, x, rng)
        out[k] = x
    meta = {"sampler": sampler, "schedule": schedule.summary(), "seed": _entropy(seed), "postprocess": None}
    return SampleSet(out, model.label, meta)


def run_gibbs(model: IsingModel, beta: float, n_sweeps: int, n_samples: int, coloring=None, seed=0, graph=None) -> SampleSet:
    """Independent fixed-temperature Gibbs chains from uniform starts."""
    return run_sta(model, AnnealSchedule.constant(beta, n_sweeps), n_samples, coloring, seed, graph, sampler="gibbs")


def postprocess(
    samples: SampleSet,
    model: IsingModel,
    beta: float,
    n_sweeps: int = 1,
    coloring=None,
    seed=0,
    graph=None,
) -> SampleSet:
    """Evolve every sample by ``n_sweeps`` blocked-Gibbs sweeps at fixed ``beta``.

    Input samples are not modified.  One generator seeded by ``seed`` supplies
    the noise, laid out sample-major.
    """
    samples.check_model(model)
    if n_sweeps < 0:
        raise ValueError("n_sweeps must be >= 0")
    meta = dict(samples.meta)
    meta["postprocess"] = {"beta": float(beta), "n_sweeps": int(n_sweeps), "seed": _entropy(seed)}
    if n_sweeps == 0:
        return SampleSet(samples.states.copy(), samples.model_ref, meta, samples.weights)
    coloring = default_coloring(model, graph) if coloring is None else validate_coloring(model, coloring)
    args = _kernel_args(model, coloring)
    X = samples.states.copy()
    rng = np.random.default_rng(_entropy(seed))
    m, n = X.shape
    rows = max(1, _NOISE_BLOCK // (n_sweeps * n))
    row_betas = np.full(m, float(beta))
    for r0 in range(0, m, rows):
        noise = rng.logistic(size=(min(rows, m - r0), n_sweeps * n))
        _kernels.sweeps_rows_inplace(*args, row_betas[r0 : r0 + len(noise)], n_sweeps, X[r0 : r0 + len(noise)], noise)
    return SampleSet(X, samples.model_ref, meta, samples.weights)


# -- exact distribution propagation (small N) --------------------------------


def propagate_sweep_exact(model: IsingModel, prob: np.ndarray, beta: float, coloring, n_sweeps: int = 1) -> np.ndarray:
    """Push a full probability vector over all 2^N states through blocked-Gibbs sweeps.

    ``prob`` is indexed like :func:`annealtemp.reference.all_states` (bit ``i``
    of the index is spin ``i``).
    """
    from .reference.enumeration import all_states

    classes = validate_coloring(model, coloring)
    n = model.n_spins
    if n > 20:
        raise ValueError("exact propagation is limited to 20 spins")
    x = all_states(n)
    idx = np.arange(2**n, dtype=np.int64)
    zeta = effective_fields(model, x)
    p = np.asarray(prob, dtype=np.float64).copy()
    for _ in range(n_sweeps):
        for cls in classes:
            mask = int(np.sum(1 << cls.astype(np.int64)))
            rest = idx & ~mask
            marg = np.bincount(rest, weights=p, minlength=2**n)
            # zeta_i for i in an independent set depends only on spins outside it
            cond = np.prod(expit(-2.0 * beta * zeta[:, cls] * x[:, cls]), axis=1)
            p = marg[rest] * cond
    return p


# -- parallel tempering -------------------------------------------------------


@dataclass
class PTResult:
    """Output of a replica-exchange run.

    ``samples[r]`` holds the post-burn-in states recorded at ``ladder[r]`` (one
    per exchange round) when states were kept.  ``block_energy`` and
    ``block_edge_products`` are per-block means of the post-burn-in rounds,
    shape ``(n_blocks, R)`` and ``(n_blocks, R, M)``.
    """

    ladder: np.ndarray
    samples: list | None
    energy_trace: np.ndarray
    swap_acceptance: np.ndarray
    swap_attempts: np.ndarray
    block_energy: np.ndarray
    block_edge_products: np.ndarray
    block_magnetization: np.ndarray
    meta: dict = field(default_factory=dict)


def swap_probability(beta_a: float, beta_b: float, energy_a: float, energy_b: float) -> float:
    """Metropolis acceptance for exchanging the states of two replicas."""
    return float(min(1.0, np.exp(min(0.0, (beta_a - beta_b) * (energy_a - energy_b)))))


def default_ladder(beta_max: float, n_rungs: int = 16, beta_min: float = 0.1) -> np.ndarray:
    return np.geomspace(beta_min, beta_max, n_rungs)


def run_parallel_tempering(
    model: IsingModel,
    beta_ladder,
    sweeps_per_exchange: int = 1,
    n_exchanges: int = 1000,
    burn_in: int = 250,
    seed=0,
    coloring=None,
    graph=None,
    keep_states: bool = True,
    n_blocks: int = 50,
) -> PTResult:
    """Replica exchange over ``beta_ladder`` (strictly increasing).

    Each round every replica does ``sweeps_per_exchange`` Gibbs sweeps at its own
    beta, then adjacent pairs attempt swaps, even pairs on even rounds and odd
    pairs on odd rounds.  Rounds after ``burn_in`` are recorded.
    """
    ladder = np.asarray(beta_ladder, dtype=np.float64).reshape(-1)
    R = len(ladder)
    if R < 1:
        raise ValueError("empty ladder")
    if np.any(np.diff(ladder) <= 0):
        raise ValueError("ladder must be strictly increasing")
    if burn_in >= n_exchanges:
        raise ValueError("burn_in must be smaller than n_exchanges")
    coloring = default_coloring(model, graph) if coloring is None else validate_coloring(model, coloring)
    args = _kernel_args(model, coloring)
    rng = np.random.default_rng(_entropy(seed))
    n = model.n_spins
    X = (2 * rng.integers(0, 2, size=(R, n)) - 1).astype(np.int8)
    kept = n_exchanges - burn_in
    n_blocks = max(1, min(n_blocks, kept))
    block_of = np.minimum(np.arange(kept) * n_blocks // kept, n_blocks - 1)
    block_len = np.bincount(block_of, minlength=n_blocks).astype(np.float64)
    b_energy = np.zeros((n_blocks, R))
    b_edges = np.zeros((n_blocks, R, model.n_edges))
    b_mag = np.zeros((n_blocks, R, n))
    trace = np.zeros((n_exchanges, R))
    acc = np.zeros(max(R - 1, 0))
    att = np.zeros(max(R - 1, 0))
    states = np.empty((kept, R, n), dtype=np.int8) if keep_states else None
    for t in range(n_exchanges):
        noise = rng.logistic(size=(R, sweeps_per_exchange * n))
        _kernels.sweeps_rows_inplace(*args, ladder, sweeps_per_exchange, X, noise)
        E = energy(model, X)
        if R > 1:
            pairs = np.arange(t % 2, R - 1, 2)
            u = rng.random(len(pairs))
            for a, uu in zip(pairs, u):
                att[a] += 1
                if uu < swap_probability(ladder[a], ladder[a + 1], E[a], E[a + 1]):
                    acc[a] += 1
                    X[[a, a + 1]] = X[[a + 1, a]]
                    E[[a, a + 1]] = E[[a + 1, a]]
        trace[t] = E
        if t >= burn_in:
            k = t - burn_in
            blk = block_of[k]
            b_energy[blk] += E
            xf = X.astype(np.float64)
            b_edges[blk] += xf[:, model.edge_i] * xf[:, model.edge_j]
            b_mag[blk] += xf
            if keep_states:
                states[k] = X
    b_energy /= block_len[:, None]
    b_edges /= block_len[:, None, None]
    b_mag /= block_len[:, None, None]
    samples = None
    if keep_states:
        samples = [
            SampleSet(states[:, r].copy(), model.label, {"sampler": "pt", "beta": float(ladder[r]), "seed": _entropy(seed)})
            for r in range(R)
        ]
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(att > 0, acc / np.maximum(att, 1), np.nan)
    return PTResult(
        ladder=ladder,
        samples=samples,
        energy_trace=trace,
        swap_acceptance=rate,
        swap_attempts=att,
        block_energy=b_energy,
        block_edge_products=b_edges,
        block_magnetization=b_mag,
        meta={
            "sweeps_per_exchange": sweeps_per_exchange,
            "n_exchanges": n_exchanges,
            "burn_in": burn_in,
            "n_blocks": n_blocks,
            "seed": _entropy(seed),
        },
    )


def gibbs_chain(model: IsingModel, beta: float, n_sweeps: int, seed=0, coloring=None, graph=None, record_every: int = 1):
    """A single fixed-beta Gibbs chain from a uniform start; returns recorded states.

    Consumes its generator exactly like a one-replica :func:`run_parallel_tempering`
    with ``sweeps_per_exchange=record_every``.
    """
    coloring = default_coloring(model, graph) if coloring is None else validate_coloring(model, coloring)
    args = _kernel_args(model, coloring)
    rng = np.random.default_rng(_entropy(seed))
    n = model.n_spins
    X = (2 * rng.integers(0, 2, size=(1, n)) - 1).astype(np.int8)
    out = []
    for _ in range(n_sweeps // record_every):
        noise = rng.logistic(size=(1, record_every * n))
        _kernels.sweeps_rows_inplace(*args, np.array([float(beta)]), record_every, X, noise)
        out.append(X[0].copy())
    return np.array(out, dtype=np.int8)
