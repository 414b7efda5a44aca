"""Inverse-temperature estimators and objective curves for heuristic sample sets.

Four estimators are provided:

* ``ml``      energy matching against reference Boltzmann mean energies
* ``mlpl``    maximum log-pseudo-likelihood, root of a monotone sum of logistic terms
* ``min-mse`` minimizer of the mean squared error on edge correlations
* ``min-kl``  minimizer of the plug-in KL divergence ``D[P_A, B_beta]``

Estimates that diverge or leave the searchable range are reported through a
tagged sentinel, never as a large float.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from .model import IsingModel, SampleSet, effective_fields, energy
from .reference.stats import ReferenceStatistics, interpolate_reference

BISECT_TOL = 1e-6
BISECT_MAXITER = 200
N_BOOTSTRAP = 200
N_JACKKNIFE_BLOCKS = 100

# sentinel tags
BELOW_GRID = "below-grid"
ABOVE_GRID = "above-grid"
PLUS_INF = "+inf"
MINUS_INF = "-inf"
UNDETERMINED = "undetermined"


@dataclass
class ObjectiveCurve:
    """Objective values over a strictly increasing beta grid."""

    betas: np.ndarray
    values: np.ndarray
    se: np.ndarray | None = None
    bias: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.betas.shape != self.values.shape or len(self.betas) == 0:
            raise ValueError("curve needs one value per beta and at least one point")
        if np.any(np.diff(self.betas) <= 0):
            raise ValueError("curve betas must be strictly increasing")

    def local_minima(self) -> list[int]:
        """Interior grid indices whose two neighbours are both strictly larger."""
        v = self.values
        return [k for k in range(1, len(v) - 1) if v[k - 1] > v[k] < v[k + 1]]

    def argmin(self) -> int:
        return int(np.argmin(self.values))


@dataclass
class EstimatorReport:
    method: str
    beta_hat: float
    sentinel: str | None = None
    objective_curve: ObjectiveCurve | None = None
    local_minima: list[float] = field(default_factory=list)
    objective_at_min: float | None = None
    se: float | None = None
    bias: float | None = None
    diagnostics: dict = field(default_factory=dict)
    postprocessed: str | None = None

    @property
    def finite(self) -> bool:
        return self.sentinel is None

    def row(self) -> dict:
        return {
            "method": self.method,
            "beta_hat": self.beta_hat if self.finite else float("nan"),
            "objective_at_min": self.objective_at_min,
            "se": self.se,
            "bias": self.bias,
            "sentinel_flag": self.sentinel or "",
        }


# -- empirical statistics -----------------------------------------------------


def sample_energies(samples: SampleSet, model: IsingModel) -> np.ndarray:
    samples.check_model(model)
    return np.atleast_1d(energy(model, samples.states))


def empirical_mean_energy(samples: SampleSet, model: IsingModel) -> float:
    return float(samples.probabilities() @ sample_energies(samples, model))


def empirical_correlations(samples: SampleSet, model: IsingModel) -> np.ndarray:
    """Plug-in estimate of ``<x_i x_j>`` for every model edge."""
    samples.check_model(model)
    x = samples.states
    prods = (x[:, model.edge_i] * x[:, model.edge_j]).astype(np.float64)
    return samples.probabilities() @ prods


def empirical_magnetizations(samples: SampleSet) -> np.ndarray:
    return samples.probabilities() @ samples.states.astype(np.float64)


def plugin_entropy(samples: SampleSet) -> float:
    """Entropy (nats) of the plug-in distribution over distinct observed states."""
    _, freq = samples.distinct()
    freq = freq[freq > 0]
    return float(-(freq * np.log(freq)).sum())


def _bootstrap_indices(samples: SampleSet, n_boot: int, rng) -> np.ndarray:
    n = len(samples)
    if samples.weights is None:
        return rng.integers(0, n, size=(n_boot, n))
    return rng.choice(n, size=(n_boot, n), p=samples.probabilities())


# -- maximum likelihood ----------------------------------------------------------


def _ml_root(target: float, fn: Callable[[float], float], lo: float, hi: float, tol: float):
    f_lo, f_hi = fn(lo) - target, fn(hi) - target
    # reference energy decreases with beta: target above f(lo) means hotter than the grid
    if f_lo < 0:
        return None, BELOW_GRID, 0
    if f_hi > 0:
        return None, ABOVE_GRID, 0
    if f_lo == 0:
        return lo, None, 0
    if f_hi == 0:
        return hi, None, 0
    root, info = bisect(lambda b: fn(b) - target, lo, hi, xtol=tol, maxiter=BISECT_MAXITER, full_output=True)
    return float(root), None, int(info.iterations)


def _invert_grid(ref: ReferenceStatistics, targets: np.ndarray) -> np.ndarray:
    """Invert the piecewise-linear reference energy (clipped to the grid ends)."""
    e = ref.mean_energy[::-1]
    b = ref.beta_grid[::-1]
    # np.interp needs increasing abscissae; energy is non-increasing in beta
    e_inc = np.maximum.accumulate(e)
    return np.interp(targets, e_inc, b)


def estimate_ml(
    samples: SampleSet,
    model: IsingModel,
    ref: ReferenceStatistics,
    mean_energy_fn: Callable[[float], float] | None = None,
    n_boot: int = N_BOOTSTRAP,
    seed=0,
    tol: float = BISECT_TOL,
) -> EstimatorReport:
    """Energy-matching (maximum likelihood) estimate of beta.

    Solves ``<H>_samples = <H>_beta`` by bisection inside the reference grid.
    The reference energy is evaluated exactly when ``mean_energy_fn`` is given
    or the reference stores a density of states, and by linear interpolation of
    the grid otherwise.  The standard error comes from ``n_boot`` bootstrap
    resamples of the sample set.
    """
    energies = sample_energies(samples, model)
    p = samples.probabilities()
    target = float(p @ energies)
    if mean_energy_fn is not None:
        fn = mean_energy_fn
        evaluator = "callable"
    elif ref.has_density_of_states:
        fn = ref.dos_mean_energy
        evaluator = "density-of-states"
    else:
        fn = lambda b: interpolate_reference(ref, b)[0]  # noqa: E731
        evaluator = "grid-interpolation"
    lo, hi = float(ref.beta_grid[0]), float(ref.beta_grid[-1])
    root, sentinel, iters = _ml_root(target, fn, lo, hi, tol)
    diag = {"mean_energy": target, "bracket": (lo, hi), "iterations": iters, "evaluator": evaluator}

    se = None
    if n_boot and root is not None:
        rng = np.random.default_rng(seed)
        idx = _bootstrap_indices(samples, n_boot, rng)
        boot_targets = energies[idx].mean(axis=1)
        if ref.has_density_of_states and mean_energy_fn is None:
            boots = np.array([_ml_root(t, fn, lo, hi, tol)[0] for t in boot_targets], dtype=float)
            clipped = int(np.sum(np.isnan(boots)))
            boots = np.where(np.isnan(boots), np.where(boot_targets > target, lo, hi), boots)
        else:
            # shift the cheap grid inversion so that it agrees with the exact root
            boots = _invert_grid(ref, boot_targets) - _invert_grid(ref, np.array([target]))[0] + root
            clipped = int(np.sum((boot_targets > ref.mean_energy[0]) | (boot_targets < ref.mean_energy[-1])))
        se = float(np.std(boots, ddof=1))
        diag["bootstrap_clipped"] = clipped
    return EstimatorReport(
        method="ml",
        beta_hat=root if root is not None else float("nan"),
        sentinel=sentinel,
        se=se,
        diagnostics=diag,
    )


# -- maximum log-pseudo-likelihood ----------------------------------------------


def local_excitations(samples: SampleSet, model: IsingModel) -> np.ndarray:
    """``x_i * zeta_i(x)`` for every sample and spin; flipping spin i costs ``-2`` times this."""
    samples.check_model(model)
    return samples.states.astype(np.float64) * effective_fields(model, samples.states)


def mlpl_criterion(beta: float, u_values: np.ndarray, counts: np.ndarray) -> float:
    """``sum_k counts_k u_k sigma(2 beta u_k)``: non-decreasing in beta."""
    return float(counts @ (u_values * expit(2.0 * beta * u_values)))


def _mlpl_bracket(fn, lo=1e-3, hi=10.0, max_steps=200):
    steps = 0
    while fn(hi) < 0 and steps < max_steps:
        lo, hi = hi, hi * 2.0
        steps += 1
    width = hi - lo
    while fn(lo) > 0 and steps < max_steps:
        hi = lo
        lo = lo - width
        width *= 2.0
        steps += 1
    return lo, hi


def _mlpl_root(u_values, counts, tol):
    pos = np.any((u_values > 0) & (counts > 0))
    neg = np.any((u_values < 0) & (counts > 0))
    if not pos and not neg:
        return None, UNDETERMINED, {}
    if not pos:
        # every local move raises the energy: likelihood keeps growing with beta
        return None, PLUS_INF, {}
    if not neg:
        return None, MINUS_INF, {}
    fn = lambda b: mlpl_criterion(b, u_values, counts)  # noqa: E731
    lo, hi = _mlpl_bracket(fn)
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo, None, {"bracket": (lo, hi), "em_bracket": (f_lo, f_hi), "iterations": 0}
    if f_hi == 0:
        return hi, None, {"bracket": (lo, hi), "em_bracket": (f_lo, f_hi), "iterations": 0}
    root, info = bisect(fn, lo, hi, xtol=tol, maxiter=BISECT_MAXITER, full_output=True)
    return float(root), None, {"bracket": (lo, hi), "em_bracket": (f_lo, f_hi), "iterations": int(info.iterations)}


def estimate_mlpl(
    samples: SampleSet,
    model: IsingModel,
    n_boot: int = N_BOOTSTRAP,
    seed=0,
    tol: float = BISECT_TOL,
) -> EstimatorReport:
    """Maximum log-pseudo-likelihood estimate of beta.

    The criterion only depends on the multiset of local excitations
    ``u = x_i zeta_i``, so it is evaluated on their histogram.  A finite root
    exists iff some ``u`` is positive and some negative.
    """
    u = local_excitations(samples, model)
    w = samples.probabilities()
    u_values, inverse = np.unique(u, return_inverse=True)
    inverse = inverse.reshape(u.shape)
    counts = np.bincount(inverse.ravel(), weights=np.repeat(w, u.shape[1]), minlength=len(u_values))
    root, sentinel, diag = _mlpl_root(u_values, counts, tol)
    diag["n_distinct_excitations"] = len(u_values)

    se = None
    if n_boot and root is not None:
        rng = np.random.default_rng(seed)
        idx = _bootstrap_indices(samples, n_boot, rng)
        if len(u_values) <= 512:
            per_sample = np.zeros((len(samples), len(u_values)))
            np.add.at(per_sample, (np.repeat(np.arange(len(samples)), u.shape[1]), inverse.ravel()), 1.0)
            boot_counts = [per_sample[ix].sum(axis=0) for ix in idx]
        else:
            boot_counts = [np.bincount(inverse[ix].ravel(), minlength=len(u_values)).astype(float) for ix in idx]
        boots = []
        for c in boot_counts:
            r, s, _ = _mlpl_root(u_values, c, tol)
            if r is not None:
                boots.append(r)
        diag["bootstrap_divergent"] = n_boot - len(boots)
        se = float(np.std(boots, ddof=1)) if len(boots) > 1 else float("nan")
    return EstimatorReport(
        method="mlpl",
        beta_hat=root if root is not None else float("nan"),
        sentinel=sentinel,
        se=se,
        diagnostics=diag,
    )


# -- curves -----------------------------------------------------------------------


def _mse_values(samples: SampleSet, model: IsingModel, ref: ReferenceStatistics, include_fields: bool) -> np.ndarray:
    d = empirical_correlations(samples, model)[None, :] - ref.edge_correlations
    sq = d**2
    if include_fields:
        if ref.magnetizations is None:
            raise ValueError("reference carries no magnetizations")
        dm = empirical_magnetizations(samples)[None, :] - ref.magnetizations
        return np.concatenate([sq, dm**2], axis=1).mean(axis=1)
    return sq.mean(axis=1)


def mse_curve(
    samples: SampleSet,
    model: IsingModel,
    ref: ReferenceStatistics,
    include_fields: bool = False,
    jackknife: bool = False,
    n_blocks: int = N_JACKKNIFE_BLOCKS,
) -> ObjectiveCurve:
    """Mean squared error between empirical and reference edge correlations at each grid beta.

    With ``include_fields`` single-spin expectations join the average.  With
    ``jackknife`` per-point standard errors and bias estimates are attached.
    """
    ref.check_edges(model)
    samples.check_model(model)
    if model.n_edges == 0:
        raise ValueError("model has no couplings")
    values = _mse_values(samples, model, ref, include_fields)
    se = bias = None
    if jackknife:
        jk = jackknife_bias_correct(lambda s: _mse_values(s, model, ref, include_fields), samples, n_blocks)
        se, bias = jk.se, jk.bias
    return ObjectiveCurve(ref.beta_grid.copy(), values, se=se, bias=bias, label="mse")


def _quadratic_vertex(betas, values, k):
    """Vertex of the parabola through points k-1, k, k+1, clamped to that interval."""
    if k <= 0 or k >= len(betas) - 1:
        return float(betas[k]), float(values[k])
    x = betas[k - 1 : k + 2]
    y = values[k - 1 : k + 2]
    a, b, c = np.polyfit(x, y, 2)
    if a <= 0:
        return float(betas[k]), float(values[k])
    xv = float(np.clip(-b / (2 * a), x[0], x[2]))
    return xv, float(np.polyval([a, b, c], xv))


def estimate_min_mse(curve: ObjectiveCurve, mode: str = "global") -> EstimatorReport:
    """Minimizer of an objective curve, refined by a three-point quadratic.

    ``mode="rightmost-local"`` picks the interior local minimum at largest beta
    and falls back to the global minimizer (flagged) when there is none.
    """
    if mode not in ("global", "rightmost-local"):
        raise ValueError(f"unknown mode {mode!r}")
    minima = curve.local_minima()
    diag = {"mode": mode, "fallback": False}
    if mode == "rightmost-local" and minima:
        k = minima[-1]
    else:
        k = curve.argmin()
        diag["fallback"] = mode == "rightmost-local"
    beta_hat, val = _quadratic_vertex(curve.betas, curve.values, k)
    diag["grid_index"] = k
    se = None if curve.se is None else float(curve.se[k])
    bias = None if curve.bias is None else float(curve.bias[k])
    return EstimatorReport(
        method="min-mse" if curve.label.startswith("mse") else f"min-{curve.label or 'objective'}",
        beta_hat=beta_hat,
        objective_curve=curve,
        local_minima=[float(curve.betas[i]) for i in minima],
        objective_at_min=val,
        se=se,
        bias=bias,
        diagnostics=diag,
    )


def _kl_values(samples: SampleSet, model: IsingModel, ref: ReferenceStatistics) -> np.ndarray:
    ent = plugin_entropy(samples)
    e = empirical_mean_energy(samples, model)
    return -ent + ref.beta_grid * e + ref.log_z


def kl_curve(
    samples: SampleSet,
    model: IsingModel,
    ref: ReferenceStatistics,
    jackknife: bool = False,
    n_blocks: int = N_JACKKNIFE_BLOCKS,
) -> ObjectiveCurve:
    """Plug-in ``D_KL[P_A, B_beta] = -H(P_A) + beta <H>_A + log Z(beta)`` over the grid.

    The plug-in entropy is biased low, so the raw curve is biased high; with
    ``jackknife`` the leave-one-block-out bias estimate and SE are attached.
    """
    if not ref.has_log_z:
        raise ValueError("reference provides no log Z")
    samples.check_model(model)
    values = _kl_values(samples, model, ref)
    se = bias = None
    meta = {"plugin_entropy": plugin_entropy(samples)}
    if jackknife:
        jk = jackknife_bias_correct(lambda s: _kl_values(s, model, ref), samples, n_blocks)
        se, bias = jk.se, jk.bias
        meta["corrected"] = jk.corrected
    return ObjectiveCurve(ref.beta_grid.copy(), values, se=se, bias=bias, label="kl", meta=meta)


def estimate_min_kl(curve: ObjectiveCurve) -> EstimatorReport:
    rep = estimate_min_mse(curve, "global")
    rep.method = "min-kl"
    return rep


# -- resampling ---------------------------------------------------------------------


@dataclass
class JackknifeResult:
    estimate: np.ndarray | float
    corrected: np.ndarray | float
    se: np.ndarray | float
    bias: np.ndarray | float
    leave_out: np.ndarray


def jackknife_bias_correct(statistic: Callable[[SampleSet], object], samples: SampleSet, n_blocks: int = N_JACKKNIFE_BLOCKS) -> JackknifeResult:
    """Leave-one-block-out jackknife over contiguous blocks of samples.

    ``corrected = B * theta - (B - 1) * mean(theta_-b)``.  The correction of a
    linear statistic vanishes exactly when the blocks have equal size.
    """
    n = len(samples)
    if n < 10:
        raise ValueError("jackknife needs at least 10 samples")
    if n < n_blocks:
        raise ValueError(f"{n} samples cannot form {n_blocks} blocks")
    theta = np.asarray(statistic(samples), dtype=np.float64)
    blocks = np.array_split(np.arange(n), n_blocks)
    keep = np.ones(n, dtype=bool)
    loo = []
    for blk in blocks:
        keep[blk] = False
        loo.append(np.asarray(statistic(samples.subset(keep)), dtype=np.float64))
        keep[blk] = True
    loo = np.array(loo)
    B = n_blocks
    mean_loo = loo.mean(axis=0)
    bias = (B - 1) * (mean_loo - theta)
    corrected = theta - bias
    se = np.sqrt((B - 1) / B * ((loo - mean_loo) ** 2).sum(axis=0))
    scalar = theta.ndim == 0
    f = (lambda a: float(a)) if scalar else (lambda a: a)  # noqa: E731
    return JackknifeResult(f(theta), f(corrected), f(se), f(bias), loo)


# -- post-processed curves -----------------------------------------------------------


def curve_with_postprocessing(
    samples: SampleSet,
    model: IsingModel,
    ref: ReferenceStatistics,
    coloring=None,
    n_sweeps: int = 1,
    seed=0,
    objective: str = "mse",
    graph=None,
) -> ObjectiveCurve:
    """Objective of ``P_{beta,A}`` against ``B_beta`` with post-processing at each grid beta.

    Grid point ``g`` post-processes the raw samples with stream ``(seed, g)``;
    the raw set is never modified.  For ``objective="kl"`` the naive plug-in
    decomposition is reported (labelled ``kl-naive-coupled``): it ignores the
    dependence of the post-processed distribution on beta.
    """
    from .sampling import _entropy, default_coloring, postprocess

    if objective not in ("mse", "kl"):
        raise ValueError(f"unknown objective {objective!r}")
    ref.check_edges(model)
    if objective == "kl" and not ref.has_log_z:
        raise ValueError("reference provides no log Z")
    coloring = default_coloring(model, graph) if coloring is None else coloring
    base = _entropy(seed)
    base = base if isinstance(base, list) else [base]
    values = np.zeros(len(ref.beta_grid))
    for g, b in enumerate(ref.beta_grid):
        pp = postprocess(samples, model, float(b), n_sweeps, coloring, seed=base + [g])
        if objective == "mse":
            d = empirical_correlations(pp, model) - ref.edge_correlations[g]
            values[g] = float(np.mean(d**2))
        else:
            values[g] = -plugin_entropy(pp) + b * empirical_mean_energy(pp, model) + ref.log_z[g]
    label = "mse-pp" if objective == "mse" else "kl-naive-coupled"
    return ObjectiveCurve(ref.beta_grid.copy(), values, label=label, meta={"n_sweeps": n_sweeps, "seed": base})
