"""Compiled blocked-Gibbs inner loops.

Randomness is supplied by the caller as standard logistic noise, one value per
spin update in (sweep, color class, spin) order.  Spin ``i`` is set to +1 iff
``noise < -2 beta zeta_i``, which happens with probability
``1 / (1 + exp(2 beta zeta_i))``: the conditional Boltzmann probability.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def anneal_inplace(indptr, nbr, nbr_w, fields, class_ptr, class_idx, betas, x, noise):
    """One blocked-Gibbs sweep of state ``x`` per entry of ``betas``."""
    q = 0
    for s in range(betas.shape[0]):
        b2 = -2.0 * betas[s]
        for c in range(class_ptr.shape[0] - 1):
            for k in range(class_ptr[c], class_ptr[c + 1]):
                i = class_idx[k]
                z = fields[i]
                for p in range(indptr[i], indptr[i + 1]):
                    z += nbr_w[p] * x[nbr[p]]
                x[i] = 2.0 * (noise[q] < b2 * z) - 1.0
                q += 1


@nb.njit(cache=True, nogil=True)
def sweeps_rows_inplace(indptr, nbr, nbr_w, fields, class_ptr, class_idx, row_betas, n_sweeps, X, noise):
    """``n_sweeps`` sweeps of every row of ``X``, row ``r`` at inverse temperature ``row_betas[r]``.

    ``noise`` has shape ``(rows, n_sweeps * n_spins)``.
    """
    n = X.shape[1]
    for r in range(X.shape[0]):
        b2 = -2.0 * row_betas[r]
        q = 0
        x = X[r]
        nz = noise[r]
        for s in range(n_sweeps):
            for c in range(class_ptr.shape[0] - 1):
                for k in range(class_ptr[c], class_ptr[c + 1]):
                    i = class_idx[k]
                    z = fields[i]
                    for p in range(indptr[i], indptr[i + 1]):
                        z += nbr_w[p] * x[nbr[p]]
                    x[i] = 2 * (nz[q] < b2 * z) - 1
                    q += 1
        if q != n_sweeps * n:
            raise ValueError("noise length mismatch")
