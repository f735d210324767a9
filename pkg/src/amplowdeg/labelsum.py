"""Fast sums over restricted labelings of small patterns.

A pattern is a small multigraph on vertices 0..m-1 whose edges carry entry
functions ``y -> prod_k h_k(y)``. We need

    sum over phi : [m] -> [n], phi(0) = 0, phi(u) != phi(v) for (u, v) in C,
        of prod_edges f_e(Y[phi(u), phi(v)])

for C either all pairs (injective labelings) or the non-reversing pairs of a
tree. Inclusion-exclusion over subsets of C turns this into a signed sum
over vertex partitions of *unrestricted* sums on the quotient graph; each
unrestricted sum factorises over connected pieces, and with at most two edge
groups a piece reduces to row/column sums and diagonals of the entry-function
matrices. The cost per sample is O(n^2) per distinct entry function.
"""

from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from .prior import InvalidParameter


def hermite_matrix(k: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal probabilists' Hermite h_k via the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    if k == 0:
        return np.ones_like(x)
    prev, cur = np.ones_like(x), x.copy()
    for j in range(1, k):
        prev, cur = cur, (x * cur - np.sqrt(j) * prev) / np.sqrt(j + 1)
    return cur


def _blocks_from_pairs(m: int, pairs) -> tuple:
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    # canonical block labelling: block id = index of its smallest vertex
    return tuple(find(v) for v in range(m))


def partition_coefficients(m: int, constraints) -> dict:
    """Signed inclusion-exclusion weights sum_{S subset C, blocks(S) = pi} (-1)^|S|."""
    constraints = list(constraints)
    if len(constraints) > 16:
        raise InvalidParameter("too many distinctness constraints for inclusion-exclusion")
    coef = defaultdict(int)
    for r in range(len(constraints) + 1):
        for S in itertools.combinations(constraints, r):
            coef[_blocks_from_pairs(m, S)] += (-1) ** r
    return {pi: c for pi, c in coef.items() if c != 0}


def _piece_key(groups, pinned_block):
    """Canonical key of a connected quotient piece with at most two edge groups."""
    if len(groups) == 1:
        (a, b), ks = groups[0]
        if a == b:
            return ("loop", ks, a == pinned_block)
        return ("edge", ks, pinned_block in (a, b))
    if len(groups) == 2:
        (a1, b1), k1 = groups[0]
        (a2, b2), k2 = groups[1]
        center = ({a1, b1} & {a2, b2}).pop()

        def desc(a, b, ks):
            if a == b:
                return ("loop", ks)
            other = b if a == center else a
            return ("edge", ks, other == pinned_block)

        ends = tuple(sorted([desc(a1, b1, k1), desc(a2, b2, k2)]))
        return ("star", center == pinned_block, ends)
    raise InvalidParameter("pieces with more than two edge groups are not supported")


def compile_pattern(m: int, edges, constraints) -> dict:
    """Symbolic expansion {(piece keys, free isolated blocks): coefficient}.

    ``edges`` is a list of (u, v, k) with k the Hermite degree of the entry;
    vertex 0 is pinned to label 0.
    """
    terms = defaultdict(float)
    for pi, c in partition_coefficients(m, constraints).items():
        blocks = sorted(set(pi))
        groups = defaultdict(list)
        for u, v, k in edges:
            a, b = sorted((pi[u], pi[v]))
            groups[(a, b)].append(k)
        # connected pieces of the quotient graph over edge groups
        adj = defaultdict(set)
        for a, b in groups:
            adj[a].add(b)
            adj[b].add(a)
        seen, pieces = set(), []
        for start in adj:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                x = stack.pop()
                if x in comp:
                    continue
                comp.add(x)
                stack.extend(adj[x] - comp)
            seen |= comp
            pg = [(ab, tuple(sorted(ks))) for ab, ks in sorted(groups.items()) if ab[0] in comp]
            pieces.append(_piece_key(pg, pi[0]))
        free_isolated = sum(1 for b in blocks if b not in adj and b != pi[0])
        terms[(tuple(sorted(pieces)), free_isolated)] += c
    return {k: v for k, v in terms.items() if v != 0}


class BatchContractor:
    """Evaluates compiled patterns on a batch of symmetric matrices Y (b, n, n)."""

    def __init__(self, Y: np.ndarray):
        self.Y = np.asarray(Y, dtype=float)
        if self.Y.ndim == 2:
            self.Y = self.Y[None]
        self.n = self.Y.shape[-1]
        self._h = {}
        self._stats = {}
        self._pieces = {}

    def _entry(self, ks):
        if ks not in self._stats:
            F = np.ones_like(self.Y)
            for k in ks:
                if k not in self._h:
                    self._h[k] = hermite_matrix(k, self.Y)
                F = F * self._h[k]
            # symmetric in (i, j), so column sums equal row sums
            self._stats[ks] = (F.sum(axis=1), np.diagonal(F, axis1=1, axis2=2).copy(), F[:, 0, :].copy())
        return self._stats[ks]

    def _vector(self, desc):
        col, diag, row0 = self._entry(desc[1])
        if desc[0] == "loop":
            return diag
        return row0 if desc[2] else col

    def piece(self, key) -> np.ndarray:
        if key in self._pieces:
            return self._pieces[key]
        kind = key[0]
        if kind == "loop":
            _, diag, _ = self._entry(key[1])
            val = diag[:, 0] if key[2] else diag.sum(axis=1)
        elif kind == "edge":
            col, _, row0 = self._entry(key[1])
            val = row0.sum(axis=1) if key[2] else col.sum(axis=1)
        else:
            prod = self._vector(key[2][0]) * self._vector(key[2][1])
            val = prod[:, 0] if key[1] else prod.sum(axis=1)
        self._pieces[key] = val
        return val

    def evaluate(self, compiled: dict) -> np.ndarray:
        out = np.zeros(self.Y.shape[0])
        for (pieces, free), c in compiled.items():
            term = np.full(self.Y.shape[0], c * float(self.n) ** free)
            for key in pieces:
                term = term * self.piece(key)
            out += term
        return out
