"""Elimination orders and induced width for pairwise interaction graphs."""

from __future__ import annotations

import numpy as np


def _adjacency(n: int, edges) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in edges:
        a, b = int(a), int(b)
        adj[a].add(b)
        adj[b].add(a)
    return adj


def induced_width(n: int, edges, order) -> tuple[int, list[list[int]]]:
    """Induced width of ``order`` and the elimination cluster of each variable.

    ``clusters[p]`` lists the variable eliminated at position ``p`` followed by
    its not-yet-eliminated neighbours in the fill-in graph, all sorted by
    elimination position.
    """
    order = [int(v) for v in order]
    if sorted(order) != list(range(n)):
        raise ValueError("elimination order must be a permutation of all variables")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    adj = _adjacency(n, edges)
    clusters = []
    width = 0
    for v in order:
        nb = sorted(adj[v], key=lambda u: pos[u])
        clusters.append([v] + nb)
        width = max(width, len(nb))
        for a in nb:
            adj[a].discard(v)
            adj[a].update(u for u in nb if u != a)
        adj[v] = set()
    return width, clusters


def min_fill_order(n: int, edges, seed: int | None = None) -> list[int]:
    """Greedy min-fill order; ties broken by degree, then index (or randomly with ``seed``)."""
    adj = _adjacency(n, edges)
    rng = np.random.default_rng(seed) if seed is not None else None
    remaining = set(range(n))
    order = []
    while remaining:
        best, best_key = None, None
        for v in remaining:
            nb = list(adj[v])
            fill = 0
            for k, a in enumerate(nb):
                for b in nb[k + 1 :]:
                    if b not in adj[a]:
                        fill += 1
            tie = rng.random() if rng is not None else v
            key = (fill, len(nb), tie)
            if best_key is None or key < best_key:
                best, best_key = v, key
        nb = adj[best]
        for a in nb:
            adj[a].discard(best)
            adj[a].update(u for u in nb if u != a)
        adj[best] = set()
        remaining.discard(best)
        order.append(best)
    return order


def choose_order(model, graph=None, tries: int = 1) -> tuple[list[int], int]:
    """Lowest-width order among the Chimera column sweep (when a graph is given) and min-fill."""
    edges = list(zip(model.edge_i.tolist(), model.edge_j.tolist()))
    candidates = [min_fill_order(model.n_spins, edges)]
    for t in range(1, tries):
        candidates.append(min_fill_order(model.n_spins, edges, seed=t))
    if graph is not None and graph.spec is not None and graph.n_nodes == model.n_spins:
        from ..topology import chimera_elimination_order

        candidates.insert(0, chimera_elimination_order(graph))
    best = min(candidates, key=lambda o: induced_width(model.n_spins, edges, o)[0])
    return best, induced_width(model.n_spins, edges, best)[0]
