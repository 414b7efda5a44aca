"""Ising models, spin states and sample sets.

The Hamiltonian convention is

    H(x) = sum_{(i,j) in edges} w_ij x_i x_j + sum_i h_i x_i,   x in {-1,+1}^N

with every undirected edge stored once and ``w_ij`` the total coefficient of
``x_i x_j``.  The effective field of spin ``i`` is ``zeta_i = h_i + sum_j w_ij x_j``
so that flipping spin ``i`` changes the energy by ``-2 x_i zeta_i``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "IsingModel",
    "SampleSet",
    "as_spins",
    "energy",
    "effective_fields",
    "flip_delta",
]


def as_spins(state, n_spins: int | None = None) -> np.ndarray:
    """Validate a spin state (1-D) or batch of states (2-D) and return it as int8."""
    arr = np.asarray(state)
    if arr.ndim not in (1, 2):
        raise ValueError(f"spin states must be 1-D or 2-D, got shape {arr.shape}")
    if n_spins is not None and arr.shape[-1] != n_spins:
        raise ValueError(f"state has {arr.shape[-1]} spins, model has {n_spins}")
    if arr.size and not np.all((arr == 1) | (arr == -1)):
        raise ValueError("spin entries must be exactly +1 or -1")
    return arr.astype(np.int8, copy=False)


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Pairwise Ising model with one stored weight per undirected edge.

    Attributes
    ----------
    n_spins : int
    edge_i, edge_j : ndarray of int
        Edge endpoints, ``edge_i < edge_j`` elementwise.
    weights : ndarray of float
        Total pair coefficient per edge.
    fields : ndarray of float, shape (n_spins,)
    metadata : dict
        Free-form provenance (``label``, ``generator``, ``seed``, ...).
    """

    n_spins: int
    edge_i: np.ndarray
    edge_j: np.ndarray
    weights: np.ndarray
    fields: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(self.n_spins)
        if n < 1:
            raise ValueError("n_spins must be positive")
        ei = np.asarray(self.edge_i, dtype=np.int64).reshape(-1)
        ej = np.asarray(self.edge_j, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        h = np.zeros(n) if self.fields is None else np.asarray(self.fields, dtype=np.float64).reshape(-1)
        if not (len(ei) == len(ej) == len(w)):
            raise ValueError("edge arrays must have equal length")
        if h.shape != (n,):
            raise ValueError(f"fields must have length {n}")
        if len(ei):
            if ei.min() < 0 or ej.max() >= n:
                raise ValueError("edge index out of range")
            if np.any(ei >= ej):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            keys = ei * n + ej
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate edges")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(h))):
            raise ValueError("weights and fields must be finite")
        for name, arr in (("edge_i", ei), ("edge_j", ej), ("weights", w), ("fields", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n_spins", n)
        object.__setattr__(self, "metadata", dict(self.metadata or {}))

        # CSR adjacency: neighbours of i are nbr[indptr[i]:indptr[i+1]] with weights nbr_w
        src = np.concatenate([ei, ej])
        dst = np.concatenate([ej, ei])
        ww = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        for name, arr in (("indptr", indptr), ("nbr", dst[order]), ("nbr_w", ww[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, n_spins: int, edges, fields=None, metadata=None) -> "IsingModel":
        """Build from ``(i, j, w)`` triples in any orientation.

        ``fields`` may be a dense vector or a mapping ``{i: h_i}``.
        """
        edges = list(edges)
        ei = np.array([min(int(e[0]), int(e[1])) for e in edges], dtype=np.int64)
        ej = np.array([max(int(e[0]), int(e[1])) for e in edges], dtype=np.int64)
        w = np.array([float(e[2]) for e in edges], dtype=np.float64)
        if isinstance(fields, dict):
            h = np.zeros(n_spins)
            for k, v in fields.items():
                h[int(k)] = float(v)
        elif fields is None:
            h = np.zeros(n_spins)
        else:
            h = np.asarray(fields, dtype=np.float64)
        return cls(n_spins, ei, ej, w, h, dict(metadata or {}))

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @property
    def label(self) -> str:
        return str(self.metadata.get("label", self.content_hash()[:12]))

    @property
    def has_fields(self) -> bool:
        return bool(np.any(self.fields != 0))

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.edge_i, self.edge_j, self.weights)]

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric matrix ``W`` with ``W[i, j] = W[j, i] = w_ij``."""
        W = np.zeros((self.n_spins, self.n_spins))
        W[self.edge_i, self.edge_j] = self.weights
        W[self.edge_j, self.edge_i] = self.weights
        return W

    def neighbors(self, i: int) -> np.ndarray:
        return self.nbr[self.indptr[i]:self.indptr[i + 1]]

    def scaled(self, c: float) -> "IsingModel":
        """Model with all couplings and fields multiplied by ``c``."""
        meta = dict(self.metadata)
        meta["scale"] = meta.get("scale", 1.0) * c
        return IsingModel(self.n_spins, self.edge_i, self.edge_j, self.weights * c, self.fields * c, meta)

    def content_hash(self) -> str:
        """SHA-256 over the numerical content (metadata excluded)."""
        h = hashlib.sha256()
        h.update(np.int64(self.n_spins).tobytes())
        for arr in (self.edge_i, self.edge_j, self.weights, self.fields):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_spins": self.n_spins,
            "edges": [[i, j, w] for i, j, w in self.edges()],
            "fields": [[int(i), float(self.fields[i])] for i in np.flatnonzero(self.fields)],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "IsingModel":
        fields = {int(i): float(h) for i, h in d.get("fields", [])}
        return cls.from_edges(int(d["n_spins"]), d.get("edges", []), fields, d.get("metadata"))

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "IsingModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def energy(model: IsingModel, state) -> float | np.ndarray:
    """Energy of a state, or of each row of a 2-D batch."""
    x = as_spins(state, model.n_spins).astype(np.float64)
    pair = x[..., model.edge_i] * x[..., model.edge_j]
    e = pair @ model.weights + x @ model.fields
    return float(e) if x.ndim == 1 else e


def effective_fields(model: IsingModel, state) -> np.ndarray:
    """Effective fields ``zeta_i = h_i + sum_j w_ij x_j`` (batched over leading axis)."""
    x = as_spins(state, model.n_spins).astype(np.float64)
    z = np.broadcast_to(model.fields, x.shape).copy()
    # scatter-add both orientations of every edge
    if x.ndim == 1:
        np.add.at(z, model.edge_i, model.weights * x[model.edge_j])
        np.add.at(z, model.edge_j, model.weights * x[model.edge_i])
    else:
        z += x[:, model.edge_j] @ _incidence(model.edge_i, model.weights, model.n_spins)
        z += x[:, model.edge_i] @ _incidence(model.edge_j, model.weights, model.n_spins)
    return z


def _incidence(rows, weights, n):
    M = np.zeros((len(rows), n))
    M[np.arange(len(rows)), rows] = weights
    return M


def flip_delta(model: IsingModel, state, i: int) -> float:
    """Energy change from flipping spin ``i``, evaluated locally."""
    x = as_spins(state, model.n_spins)
    if x.ndim != 1:
        raise ValueError("flip_delta expects a single state")
    if not 0 <= i < model.n_spins:
        raise IndexError(f"spin index {i} out of range for {model.n_spins} spins")
    lo, hi = model.indptr[i], model.indptr[i + 1]
    zeta = model.fields[i] + float(np.dot(model.nbr_w[lo:hi], x[model.nbr[lo:hi]]))
    return -2.0 * float(x[i]) * zeta


@dataclass
class SampleSet:
    """A batch of spin configurations drawn for one model.

    ``weights`` is optional; when given, row ``k`` carries probability mass
    proportional to ``weights[k]`` in the empirical distribution, which lets an
    exact probability table stand in for a finite sample.
    """

    states: np.ndarray
    model_ref: str = ""
    meta: dict = field(default_factory=dict)
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.states = as_spins(np.atleast_2d(self.states))
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (len(self.states),) or np.any(self.weights < 0):
                raise ValueError("weights must be non-negative, one per state")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_spins(self) -> int:
        return self.states.shape[1]

    def probabilities(self) -> np.ndarray:
        """Plug-in probability of each row (uniform unless weighted)."""
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights / self.weights.sum()

    def check_model(self, model: IsingModel) -> None:
        if self.n_spins != model.n_spins:
            raise ValueError(f"samples have {self.n_spins} spins, model has {model.n_spins}")

    def subset(self, index) -> "SampleSet":
        w = None if self.weights is None else self.weights[index]
        return SampleSet(self.states[index], self.model_ref, dict(self.meta), w)

    def distinct(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows and their plug-in frequencies."""
        uniq, inverse = np.unique(self.states, axis=0, return_inverse=True)
        freq = np.bincount(inverse.reshape(-1), weights=self.probabilities(), minlength=len(uniq))
        return uniq, freq
