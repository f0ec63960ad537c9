"""Sparse random directed graphs with guaranteed self-loops.

Units are numbered 1..N. The always-on unit 0 feeds every unit and is kept
implicit: it never appears in ``in_edges`` but occupies slot 0 of the padded
source arrays used by the kernels.
"""
from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np


class TopologyError(ValueError):
    pass


class NetworkTopology:
    """In-edge lists plus the padded arrays the kernels consume.

    ``in_edges[j]`` lists the sources of unit j (sorted, self-loop included);
    ``in_edges[0]`` is empty.
    """

    def __init__(self, n_units: int, in_edges: Sequence[Sequence[int]], d: int | None = None):
        n_units = int(n_units)
        if n_units < 1:
            raise TopologyError("network needs at least one unit")
        if len(in_edges) == n_units:
            in_edges = [()] + list(in_edges)
        if len(in_edges) != n_units + 1:
            raise TopologyError("in_edges must list sources for units 1..N")
        if len(in_edges[0]) != 0:
            raise TopologyError("unit 0 has no incoming edges")
        edges: list[tuple[int, ...]] = [()]
        for j in range(1, n_units + 1):
            srcs = tuple(int(i) for i in in_edges[j])
            if len(set(srcs)) != len(srcs):
                raise TopologyError(f"duplicate sources for unit {j}")
            if j not in srcs:
                raise TopologyError(f"unit {j} lacks its self-loop")
            if any(i < 1 or i > n_units for i in srcs):
                raise TopologyError(f"source out of range for unit {j}")
            edges.append(srcs)
        self.n_units = n_units
        self.in_edges = tuple(edges)
        self.d = int(d) if d is not None else max(len(e) for e in edges)

        K = 1 + max(len(e) for e in edges)
        src = np.zeros((n_units + 1, K), dtype=np.int64)
        nsrc = np.zeros(n_units + 1, dtype=np.int64)
        selfk = np.zeros(n_units + 1, dtype=np.int64)
        for j in range(1, n_units + 1):
            srcs = edges[j]
            src[j, 1:1 + len(srcs)] = srcs
            nsrc[j] = 1 + len(srcs)
            selfk[j] = 1 + srcs.index(j)
        for arr in (src, nsrc, selfk):
            arr.setflags(write=False)
        self.src, self.nsrc, self.selfk = src, nsrc, selfk

    @property
    def max_sources(self) -> int:
        """Width of the padded source arrays (bias slot included)."""
        return int(self.src.shape[1])

    @property
    def n_edges(self) -> int:
        return sum(len(e) for e in self.in_edges)

    def out_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_units + 1, dtype=np.int64)
        for srcs in self.in_edges:
            for i in srcs:
                deg[i] += 1
        return deg

    def in_degree(self, j: int) -> int:
        return len(self.in_edges[j])

    def __eq__(self, other):
        return (isinstance(other, NetworkTopology) and self.n_units == other.n_units
                and self.in_edges == other.in_edges)

    def __hash__(self):
        return hash((self.n_units, self.in_edges))

    def __repr__(self):
        return f"NetworkTopology(N={self.n_units}, d={self.d}, edges={self.n_edges})"

    def to_dict(self) -> dict:
        return {"n_units": self.n_units, "d": self.d,
                "in_edges": {str(j): list(self.in_edges[j]) for j in range(1, self.n_units + 1)}}

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkTopology":
        n = int(data["n_units"])
        edges = [()] + [data["in_edges"][str(j)] for j in range(1, n + 1)]
        return cls(n, edges, data.get("d"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkTopology":
        return cls.from_dict(json.loads(text))


def build_random_graph(n_units: int, d: int, seed=None) -> NetworkTopology:
    """Each unit gets its self-loop plus d-1 distinct random targets.

    Targets are drawn per unit without replacement from the other units, so
    every out-degree is exactly d while in-degrees vary around d.
    """
    if not 1 <= d <= n_units:
        raise TopologyError(f"need 1 <= d <= N, got d={d}, N={n_units}")
    rng = np.random.default_rng(seed)
    incoming: list[list[int]] = [[] for _ in range(n_units + 1)]
    for i in range(1, n_units + 1):
        incoming[i].append(i)
        if d > 1:
            others = np.array([u for u in range(1, n_units + 1) if u != i])
            for j in rng.choice(others, size=d - 1, replace=False):
                incoming[int(j)].append(i)
    return NetworkTopology(n_units, [sorted(s) for s in incoming], d)


def complete_graph(n_units: int) -> NetworkTopology:
    full = list(range(1, n_units + 1))
    return NetworkTopology(n_units, [()] + [full] * n_units, n_units)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def semi_sparse_connectivity(model_kind: str, n_symbols: int) -> int:
    """round(sqrt(2A)) for gated models, A for the classical recurrent net."""
    kind = str(model_kind).lower()
    if kind == "rnn":
        return int(n_symbols)
    if kind in ("glnn", "gnn"):
        return max(1, _round_half_up(math.sqrt(2 * n_symbols)))
    raise TopologyError(f"unknown model kind {model_kind!r}")


def resolve_connectivity(conn, model_kind: str, n_symbols: int, n_units: int) -> int:
    """Map ``"sparse"``/``"semi"``/``"full"`` or an integer to d, clamped to [1, N]."""
    if conn == "sparse":
        d = 3
    elif conn == "semi":
        d = semi_sparse_connectivity(model_kind, n_symbols)
    elif conn == "full":
        d = n_units
    else:
        d = int(conn)
    return min(max(d, 1), n_units)
