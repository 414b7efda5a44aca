"""Chimera graphs and the RAN1 / AC3 spin-glass instance generators.

Ideal-graph node index for a ``rows x cols`` grid with shore size ``L``::

    index = ((row * cols + col) * 2 + shore) * L + offset

where ``shore`` 0 is the horizontal shore and 1 the vertical shore.  Horizontal
shore qubits couple to the same offset in the horizontally adjacent cell,
vertical ones to the vertically adjacent cell.  After dead qubits are removed
the surviving nodes are relabelled ``0..n-1`` in increasing ideal index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import IsingModel

INTRA = "intra"
INTER = "inter"


@dataclass(frozen=True)
class ChimeraSpec:
    grid_rows: int
    grid_cols: int
    shore_size: int = 4
    dead_qubits: tuple[int, ...] = ()
    dead_couplers: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1 or self.shore_size < 1:
            raise ValueError("grid_rows, grid_cols and shore_size must all be >= 1")
        object.__setattr__(self, "dead_qubits", tuple(int(q) for q in self.dead_qubits))
        object.__setattr__(
            self, "dead_couplers", tuple(tuple(sorted((int(a), int(b)))) for a, b in self.dead_couplers)
        )

    @classmethod
    def square(cls, n: int, **kw) -> "ChimeraSpec":
        return cls(n, n, **kw)

    @property
    def tag(self) -> str:
        base = f"C{self.grid_rows}" if self.grid_rows == self.grid_cols else f"C{self.grid_rows}x{self.grid_cols}"
        return base if self.shore_size == 4 else f"{base}s{self.shore_size}"

    def ideal_index(self, row: int, col: int, shore: int, offset: int) -> int:
        return ((row * self.grid_cols + col) * 2 + shore) * self.shore_size + offset


@dataclass(frozen=True, eq=False)
class TopologyGraph:
    """Graph with Chimera coordinates, edge tags and a proper two-coloring."""

    n_nodes: int
    edges: np.ndarray  # (M, 2) int, i < j
    edge_tags: tuple[str, ...]
    coords: np.ndarray  # (n_nodes, 4): row, col, shore, offset
    colors: np.ndarray  # (n_nodes,) in {0, 1}
    ideal_index: np.ndarray
    spec: ChimeraSpec | None = None
    name: str = ""

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def color_classes(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.colors == c) for c in range(int(self.colors.max()) + 1)]

    def intra_mask(self) -> np.ndarray:
        return np.array([t == INTRA for t in self.edge_tags], dtype=bool)


def _edge_tag(ci, cj) -> str:
    return INTRA if (ci[0] == cj[0] and ci[1] == cj[1]) else INTER


def build_chimera(spec: ChimeraSpec) -> TopologyGraph:
    """Ideal Chimera graph for ``spec`` with its dead qubits and couplers removed."""
    R, C, L = spec.grid_rows, spec.grid_cols, spec.shore_size
    n_ideal = R * C * 2 * L
    coords = np.array(
        [(r, c, u, k) for r in range(R) for c in range(C) for u in range(2) for k in range(L)], dtype=np.int64
    )
    idx = spec.ideal_index
    ideal_edges = []
    for r in range(R):
        for c in range(C):
            for k in range(L):
                for m in range(L):
                    ideal_edges.append((idx(r, c, 0, k), idx(r, c, 1, m)))
            for k in range(L):
                if c + 1 < C:
                    ideal_edges.append((idx(r, c, 0, k), idx(r, c + 1, 0, k)))
                if r + 1 < R:
                    ideal_edges.append((idx(r, c, 1, k), idx(r + 1, c, 1, k)))
    ideal_set = set(ideal_edges)

    dead_q = set(spec.dead_qubits)
    for q in dead_q:
        if not 0 <= q < n_ideal:
            raise ValueError(f"dead qubit {q} is not in the ideal {spec.tag} graph")
    dead_c = set(spec.dead_couplers)
    for e in dead_c:
        if e not in ideal_set:
            raise ValueError(f"dead coupler {e} is not in the ideal {spec.tag} graph")

    alive = np.array([q for q in range(n_ideal) if q not in dead_q], dtype=np.int64)
    relabel = -np.ones(n_ideal, dtype=np.int64)
    relabel[alive] = np.arange(len(alive))
    edges, tags = [], []
    for a, b in sorted(ideal_set):
        if a in dead_q or b in dead_q or (a, b) in dead_c:
            continue
        edges.append((relabel[a], relabel[b]))
        tags.append(_edge_tag(coords[a], coords[b]))
    node_coords = coords[alive]
    colors = (node_coords[:, 0] + node_coords[:, 1] + node_coords[:, 2]) % 2
    return TopologyGraph(
        n_nodes=len(alive),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        edge_tags=tuple(tags),
        coords=node_coords,
        colors=colors.astype(np.int64),
        ideal_index=alive,
        spec=spec,
        name=spec.tag,
    )


def _instance_meta(graph: TopologyGraph, generator: str, seed, **extra) -> dict:
    meta = {"generator": generator, "seed": seed, "topology": graph.name}
    if graph.spec is not None:
        meta["chimera"] = {
            "rows": graph.spec.grid_rows,
            "cols": graph.spec.grid_cols,
            "shore": graph.spec.shore_size,
            "dead_qubits": list(graph.spec.dead_qubits),
            "dead_couplers": [list(e) for e in graph.spec.dead_couplers],
        }
    meta["label"] = f"{generator}-{graph.name}-s{seed}"
    meta.update(extra)
    return meta


def gen_ran1(graph: TopologyGraph, seed) -> IsingModel:
    """Zero-field model with i.i.d. uniform +/-1 couplings on every edge."""
    rng = np.random.default_rng(seed)
    w = rng.choice(np.array([-1.0, 1.0]), size=graph.n_edges)
    return IsingModel(
        graph.n_nodes, graph.edges[:, 0], graph.edges[:, 1], w, np.zeros(graph.n_nodes),
        _instance_meta(graph, "ran1", seed),
    )


def gen_ac3(graph: TopologyGraph, seed, gauge_randomize: bool = False) -> IsingModel:
    """Zero-field model: intra-cell couplings uniform on +/-1/3, inter-cell couplings -1.

    With ``gauge_randomize`` a random spin-flip gauge is applied afterwards,
    which randomizes inter-cell signs without changing the problem.
    """
    rng = np.random.default_rng(seed)
    intra = graph.intra_mask()
    w = np.where(intra, rng.choice(np.array([-1.0, 1.0]), size=graph.n_edges) / 3.0, -1.0)
    if gauge_randomize:
        g = rng.choice(np.array([-1.0, 1.0]), size=graph.n_nodes)
        w = w * g[graph.edges[:, 0]] * g[graph.edges[:, 1]]
    return IsingModel(
        graph.n_nodes, graph.edges[:, 0], graph.edges[:, 1], w, np.zeros(graph.n_nodes),
        _instance_meta(graph, "ac3", seed, gauge_randomized=bool(gauge_randomize)),
    )


def generate(problem_class: str, graph: TopologyGraph, seed, **kw) -> IsingModel:
    if problem_class == "ran1":
        return gen_ran1(graph, seed)
    if problem_class == "ac3":
        return gen_ac3(graph, seed, **kw)
    raise ValueError(f"unknown problem class {problem_class!r}")


def greedy_coloring(model: IsingModel) -> list[np.ndarray]:
    """Color classes (independent sets) for an arbitrary interaction graph."""
    import networkx as nx

    g = nx.Graph()
    g.add_nodes_from(range(model.n_spins))
    g.add_edges_from(zip(model.edge_i.tolist(), model.edge_j.tolist()))
    color = nx.greedy_color(g, strategy="largest_first")
    n_colors = max(color.values()) + 1
    return [np.array(sorted(v for v, c in color.items() if c == k), dtype=np.int64) for k in range(n_colors)]


def chimera_elimination_order(graph: TopologyGraph) -> list[int]:
    """Column-sweep elimination order for a Chimera graph.

    Sweeps cell columns left to right.  Within column ``c`` and row ``r`` it
    eliminates the horizontal shore of cell ``(r, c-1)`` and the vertical shore
    of cell ``(r-1, c)``; the last column's horizontal shores go at the end.
    """
    if graph.spec is None:
        raise ValueError("graph carries no Chimera spec")
    R, C = graph.spec.grid_rows, graph.spec.grid_cols
    by_cell: dict[tuple[int, int, int], list[int]] = {}
    for v, (r, c, u, k) in enumerate(graph.coords):
        by_cell.setdefault((int(r), int(c), int(u)), []).append(v)

    order: list[int] = []
    for c in range(C):
        for r in range(R):
            if c > 0:
                order += by_cell.get((r, c - 1, 0), [])
            if r > 0:
                order += by_cell.get((r - 1, c, 1), [])
        order += by_cell.get((R - 1, c, 1), [])
    for r in range(R):
        order += by_cell.get((r, C - 1, 0), [])
    return order
