"""Oriented formation graphs and edge vectors.

Vertices and edges are indexed from 0 inside the library.  Each edge is
stored as a ``(tail, head)`` pair and its edge vector points from the
tail agent to the head agent, ``z_k = x_head - x_tail``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class FormationGraph:
    """Connected, simple, oriented graph on ``n`` agents.

    Parameters
    ----------
    n : int
        Number of vertices (agents), at least 3.
    edges : sequence of (tail, head) pairs
        Oriented edges; the position in the sequence is the edge label.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __init__(self, n: int, edges: Iterable[Sequence[int]]):
        edges = tuple((int(t), int(h)) for t, h in edges)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", edges)
        self._validate()

    def _validate(self) -> None:
        if self.n < 3:
            raise ValueError(f"need at least 3 vertices, got {self.n}")
        if not self.edges:
            raise ValueError("graph has no edges")
        seen = set()
        for k, (t, h) in enumerate(self.edges):
            if not (0 <= t < self.n and 0 <= h < self.n):
                raise ValueError(f"edge {k} = {(t, h)} references a missing vertex")
            if t == h:
                raise ValueError(f"edge {k} is a self-loop")
            key = frozenset((t, h))
            if key in seen:
                raise ValueError(f"edge {k} duplicates an earlier undirected edge")
            seen.add(key)
        # connectivity by flood fill
        adj: dict[int, list[int]] = {i: [] for i in range(self.n)}
        for t, h in self.edges:
            adj[t].append(h)
            adj[h].append(t)
        stack, reached = [0], {0}
        while stack:
            for j in adj[stack.pop()]:
                if j not in reached:
                    reached.add(j)
                    stack.append(j)
        if len(reached) != self.n:
            raise ValueError("graph is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        return np.array([t for t, _ in self.edges], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        return np.array([h for _, h in self.edges], dtype=int)

    def edge_label(self, i: int, j: int) -> int:
        """Label of the edge joining ``i`` and ``j`` regardless of orientation."""
        for k, (t, h) in enumerate(self.edges):
            if {t, h} == {i, j}:
                return k
        raise KeyError(f"no edge between {i} and {j}")

    @classmethod
    def complete(cls, n: int) -> "FormationGraph":
        """Complete graph with every edge oriented from the lower to the higher index."""
        return cls(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def cycle_triangle(cls) -> "FormationGraph":
        """Triangle with edge k directed from agent k+1 to agent k (cyclically)."""
        return cls(3, [(1, 0), (2, 1), (0, 2)])


def as_multipoint(g: FormationGraph, x) -> np.ndarray:
    """Return ``x`` as an ``(n, 2)`` float array, checking it matches ``g``."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        if pts.size != 2 * g.n:
            raise ValueError(f"expected {2 * g.n} coordinates, got {pts.size}")
        pts = pts.reshape(g.n, 2)
    if pts.shape != (g.n, 2):
        raise ValueError(f"expected multipoint of shape ({g.n}, 2), got {pts.shape}")
    return pts


def incidence_transpose(g: FormationGraph) -> np.ndarray:
    """Signed ``m x n`` matrix with +1 at each edge's head and -1 at its tail."""
    H = np.zeros((g.m, g.n))
    rows = np.arange(g.m)
    H[rows, g.heads] = 1.0
    H[rows, g.tails] = -1.0
    return H


def tail_selector(g: FormationGraph) -> np.ndarray:
    """``m x n`` matrix with a single 1 at each edge's tail (the positive part of ``-H``)."""
    J = np.zeros((g.m, g.n))
    J[np.arange(g.m), g.tails] = 1.0
    return J


def edge_vectors(g: FormationGraph, x) -> np.ndarray:
    """Edge vectors ``z_k = x_head - x_tail`` as an ``(m, 2)`` array."""
    pts = as_multipoint(g, x)
    return pts[g.heads] - pts[g.tails]


def neighbor_split(g: FormationGraph, i: int) -> tuple[list[int], list[int]]:
    """Split the edges incident to vertex ``i``.

    Returns
    -------
    heads, tails : list of int
        Labels of edges whose head is ``i`` and of edges whose tail is ``i``.
    """
    if not 0 <= i < g.n:
        raise IndexError(f"vertex {i} out of range for n={g.n}")
    heads = [k for k, (_, h) in enumerate(g.edges) if h == i]
    tails = [k for k, (t, _) in enumerate(g.edges) if t == i]
    return heads, tails
