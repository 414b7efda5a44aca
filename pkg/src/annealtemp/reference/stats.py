"""Reference Boltzmann statistics on a grid of inverse temperatures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from ..io import atomic_write_text, fmt_float, read_csv, write_csv

METHODS = ("exact-enum", "exact-dp", "pt")


def default_beta_grid(beta_terminal: float = 3.54, step: float = 0.05, factor: float = 1.5) -> np.ndarray:
    """Grid from 0 to ``factor * beta_terminal`` (rounded up to a whole step)."""
    n = int(np.ceil(factor * beta_terminal / step - 1e-9))
    return np.round(np.arange(n + 1) * step, 12)


@dataclass
class ReferenceStatistics:
    """Mean energy, edge correlations and log Z of the Boltzmann family on a beta grid.

    ``standard_errors`` maps a quantity name (``mean_energy``, ``edge_correlations``)
    to an array of the same shape (PT only).  ``energy_levels`` and
    ``log_degeneracy`` hold a density of states when enumeration produced one,
    which makes the mean energy available exactly at any beta.
    """

    beta_grid: np.ndarray
    mean_energy: np.ndarray
    edge_correlations: np.ndarray
    log_z: np.ndarray | None
    method: str
    standard_errors: dict | None = None
    magnetizations: np.ndarray | None = None
    edges: np.ndarray | None = None
    energy_levels: np.ndarray | None = None
    log_degeneracy: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta_grid = np.asarray(self.beta_grid, dtype=np.float64)
        self.mean_energy = np.asarray(self.mean_energy, dtype=np.float64)
        self.edge_correlations = np.atleast_2d(np.asarray(self.edge_correlations, dtype=np.float64))
        if self.log_z is not None:
            self.log_z = np.asarray(self.log_z, dtype=np.float64)
        if self.method not in METHODS:
            raise ValueError(f"unknown reference method {self.method!r}")
        if np.any(np.diff(self.beta_grid) <= 0):
            raise ValueError("beta grid must be strictly increasing")
        G = len(self.beta_grid)
        if self.mean_energy.shape != (G,) or self.edge_correlations.shape[0] != G:
            raise ValueError("statistics must have one entry per grid point")

    @property
    def exact(self) -> bool:
        return self.method != "pt"

    @property
    def has_log_z(self) -> bool:
        return self.log_z is not None

    @property
    def has_density_of_states(self) -> bool:
        return self.energy_levels is not None

    def check_edges(self, model) -> None:
        if self.edges is None:
            if self.edge_correlations.shape[1] != model.n_edges:
                raise ValueError("reference correlations do not match the model's edge count")
            return
        mine = np.stack([model.edge_i, model.edge_j], axis=1)
        if self.edges.shape != mine.shape or not np.array_equal(self.edges, mine):
            raise ValueError("reference edges do not match the model's edges")

    def in_hull(self, beta: float) -> bool:
        return self.beta_grid[0] - 1e-12 <= beta <= self.beta_grid[-1] + 1e-12

    # -- evaluation off the grid ----------------------------------------

    def dos_log_z(self, beta: float) -> float:
        return float(logsumexp(self.log_degeneracy - beta * self.energy_levels))

    def dos_mean_energy(self, beta) -> np.ndarray | float:
        b = np.atleast_1d(np.asarray(beta, dtype=np.float64))
        a = self.log_degeneracy[None, :] - b[:, None] * self.energy_levels[None, :]
        w = np.exp(a - logsumexp(a, axis=1, keepdims=True))
        e = w @ self.energy_levels
        return float(e[0]) if np.ndim(beta) == 0 else e

    def dos_energy_variance(self, beta: float) -> float:
        a = self.log_degeneracy - beta * self.energy_levels
        w = np.exp(a - logsumexp(a))
        m = w @ self.energy_levels
        return float(w @ (self.energy_levels - m) ** 2)

    def mean_energy_at(self, beta: float) -> float:
        """Mean energy at any beta in the grid hull (exact when a density of states is stored)."""
        if self.has_density_of_states:
            return self.dos_mean_energy(float(beta))
        return interpolate_reference(self, beta)[0]

    # -- persistence ---------------------------------------------------

    def cache_key(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(str(self.metadata.get("instance_hash", "")).encode())
        h.update(self.beta_grid.tobytes())
        h.update(self.method.encode())
        return h.hexdigest()[:16]

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.json`` (scalars per beta) and ``<stem>.corr.csv`` (per-edge correlations)."""
        stem = Path(stem)
        se = self.standard_errors or {}
        doc = {
            "method": self.method,
            "beta_grid": [fmt_float(b) for b in self.beta_grid],
            "mean_energy": [fmt_float(v) for v in self.mean_energy],
            "log_z": None if self.log_z is None else [fmt_float(v) for v in self.log_z],
            "mean_energy_se": None if "mean_energy" not in se else [fmt_float(v) for v in se["mean_energy"]],
            "log_z_se": None if "log_z" not in se else [fmt_float(v) for v in se["log_z"]],
            "edges": None if self.edges is None else self.edges.tolist(),
            "energy_levels": None if self.energy_levels is None else [fmt_float(v) for v in self.energy_levels],
            "log_degeneracy": None if self.log_degeneracy is None else [fmt_float(v) for v in self.log_degeneracy],
            "metadata": self.metadata,
            "cache_key": self.cache_key(),
        }
        jpath = stem.with_suffix(".json")
        cpath = stem.with_suffix(".corr.csv")
        atomic_write_text(jpath, json.dumps(doc, indent=1))
        corr_se = se.get("edge_correlations")
        rows = []
        for g, b in enumerate(self.beta_grid):
            for k in range(self.edge_correlations.shape[1]):
                i, j = (self.edges[k] if self.edges is not None else (-1, -1))
                rows.append([float(b), int(i), int(j), float(self.edge_correlations[g, k]),
                             float(corr_se[g, k]) if corr_se is not None else float("nan")])
        write_csv(cpath, ["beta", "i", "j", "corr", "se"], rows)
        return jpath, cpath

    @classmethod
    def load(cls, stem) -> "ReferenceStatistics":
        stem = Path(stem)
        if stem.suffix == ".json":
            stem = stem.with_suffix("")
        with open(stem.with_suffix(".json")) as fh:
            doc = json.load(fh)
        fl = lambda xs: None if xs is None else np.array([float(x) for x in xs])  # noqa: E731
        betas = fl(doc["beta_grid"])
        rows = read_csv(stem.with_suffix(".corr.csv"))
        G = len(betas)
        M = len(rows) // G if G else 0
        corr = np.array([float(r["corr"]) for r in rows]).reshape(G, M)
        cse = np.array([float(r["se"]) for r in rows]).reshape(G, M)
        se = {}
        if doc.get("mean_energy_se") is not None:
            se["mean_energy"] = fl(doc["mean_energy_se"])
        if doc.get("log_z_se") is not None:
            se["log_z"] = fl(doc["log_z_se"])
        if not np.all(np.isnan(cse)):
            se["edge_correlations"] = cse
        return cls(
            beta_grid=betas,
            mean_energy=fl(doc["mean_energy"]),
            edge_correlations=corr,
            log_z=fl(doc["log_z"]),
            method=doc["method"],
            standard_errors=se or None,
            edges=None if doc.get("edges") is None else np.array(doc["edges"], dtype=np.int64).reshape(-1, 2),
            energy_levels=fl(doc.get("energy_levels")),
            log_degeneracy=fl(doc.get("log_degeneracy")),
            metadata=doc.get("metadata", {}),
        )


def interpolate_reference(ref: ReferenceStatistics, beta: float):
    """Statistics at ``beta`` inside the grid hull.

    Energy and correlations are interpolated linearly.  Log Z integrates the
    interpolated energy from the grid point to the left, so that at grid points
    the stored value is returned and ``d log Z / d beta = -<H>`` there.
    """
    b = ref.beta_grid
    beta = float(beta)
    if not ref.in_hull(beta):
        raise ValueError(f"beta={beta} outside the reference grid [{b[0]}, {b[-1]}]")
    hit = np.flatnonzero(np.abs(b - beta) <= 1e-12)
    if len(hit):
        g = int(hit[0])
        lz = None if ref.log_z is None else float(ref.log_z[g])
        return float(ref.mean_energy[g]), ref.edge_correlations[g].copy(), lz
    k = int(np.clip(np.searchsorted(b, beta, side="right") - 1, 0, len(b) - 2))
    t = (beta - b[k]) / (b[k + 1] - b[k])
    e0, e1 = ref.mean_energy[k], ref.mean_energy[k + 1]
    e = (1 - t) * e0 + t * e1
    c = (1 - t) * ref.edge_correlations[k] + t * ref.edge_correlations[k + 1]
    lz = None
    if ref.log_z is not None:
        d = beta - b[k]
        lz = float(ref.log_z[k] - d * (e0 + e) / 2.0)
    return float(e), c, lz
