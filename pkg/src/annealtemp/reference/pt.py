"""Reference statistics estimated by parallel tempering."""

from __future__ import annotations

import numpy as np

from ..model import IsingModel
from .stats import ReferenceStatistics

BURN_IN_FRACTION = 0.25
MIN_RECORDED_ROUNDS = 20


def _interp_rows(x_new, x, y):
    """Linear interpolation of ``y`` (first axis indexed by ``x``) onto ``x_new``."""
    flat = y.reshape(len(x), -1)
    out = np.stack([np.interp(x_new, x, flat[:, k]) for k in range(flat.shape[1])], axis=1)
    return out.reshape((len(x_new),) + y.shape[1:])


def thermodynamic_log_z(n_spins: int, betas: np.ndarray, mean_energy: np.ndarray) -> np.ndarray:
    """``N log 2 - int_0^beta <H> db`` by the trapezoidal rule on ``betas``.

    The first point must be 0 or the integral from 0 to it is taken with the
    energy held at its first value.
    """
    betas = np.asarray(betas, dtype=np.float64)
    e = np.asarray(mean_energy, dtype=np.float64)
    steps = np.diff(betas) * (e[1:] + e[:-1]) / 2.0
    integral = np.concatenate([[betas[0] * e[0]], betas[0] * e[0] + np.cumsum(steps)])
    return n_spins * np.log(2.0) - integral


def pt_stats(
    model: IsingModel,
    beta_grid,
    budget: int,
    seed,
    thermodynamic_integration: bool = False,
    ladder=None,
    sweeps_per_exchange: int = 1,
    n_blocks: int = 50,
    n_boot: int = 200,
    coloring=None,
    graph=None,
) -> ReferenceStatistics:
    """Estimate mean energy and edge correlations on ``beta_grid`` by replica exchange.

    ``budget`` is the number of exchange rounds; the first quarter is burn-in.
    The ladder defaults to the grid itself.  Standard errors come from a
    bootstrap over blocks of consecutive rounds (resampled jointly across
    rungs).  Log Z is only filled in with ``thermodynamic_integration``.
    """
    from ..sampling import run_parallel_tempering

    grid = np.asarray(beta_grid, dtype=np.float64)
    ladder = grid if ladder is None else np.asarray(ladder, dtype=np.float64)
    if grid[0] < ladder[0] - 1e-12 or grid[-1] > ladder[-1] + 1e-12:
        raise ValueError("beta grid must lie inside the ladder")
    burn_in = int(BURN_IN_FRACTION * budget)
    if budget - burn_in < MIN_RECORDED_ROUNDS:
        raise ValueError(f"budget {budget} too small: need at least {MIN_RECORDED_ROUNDS} rounds after burn-in")
    res = run_parallel_tempering(
        model,
        ladder,
        sweeps_per_exchange=sweeps_per_exchange,
        n_exchanges=budget,
        burn_in=burn_in,
        seed=seed,
        coloring=coloring,
        graph=graph,
        keep_states=False,
        n_blocks=n_blocks,
    )
    B = res.block_energy.shape[0]
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), 0x5E])
    picks = rng.integers(0, B, size=(n_boot, B))

    def on_grid(a):
        return a if ladder is grid else _interp_rows(grid, ladder, a)

    energy = on_grid(res.block_energy.mean(axis=0))
    corr = on_grid(res.block_edge_products.mean(axis=0))
    mag = on_grid(res.block_magnetization.mean(axis=0))
    boot_e = np.stack([on_grid(res.block_energy[p].mean(axis=0)) for p in picks])
    boot_c = np.stack([on_grid(res.block_edge_products[p].mean(axis=0)) for p in picks])
    # frozen edges give a zero bootstrap spread; never claim more precision than one record
    floor = 1.0 / (budget - burn_in)
    se = {
        "mean_energy": boot_e.std(axis=0, ddof=1),
        "edge_correlations": np.maximum(boot_c.std(axis=0, ddof=1), floor),
    }

    log_z = None
    if thermodynamic_integration:
        lad_e = res.block_energy.mean(axis=0)
        lz_ladder = thermodynamic_log_z(model.n_spins, ladder, lad_e)
        log_z = np.interp(grid, ladder, lz_ladder)
        boot_lz = np.stack(
            [np.interp(grid, ladder, thermodynamic_log_z(model.n_spins, ladder, res.block_energy[p].mean(axis=0))) for p in picks]
        )
        se["log_z"] = boot_lz.std(axis=0, ddof=1)

    return ReferenceStatistics(
        beta_grid=grid,
        mean_energy=energy,
        edge_correlations=corr,
        log_z=log_z,
        method="pt",
        standard_errors=se,
        magnetizations=mag,
        edges=np.stack([model.edge_i, model.edge_j], axis=1),
        metadata={
            "instance_hash": model.content_hash(),
            "n_spins": model.n_spins,
            "budget": int(budget),
            "burn_in": burn_in,
            "sweeps_per_exchange": sweeps_per_exchange,
            "n_blocks": B,
            "seed": np.atleast_1d(seed).tolist(),
            "swap_acceptance": [None if np.isnan(a) else float(a) for a in res.swap_acceptance],
            "thermodynamic_integration": bool(thermodynamic_integration),
        },
    )
