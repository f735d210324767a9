"""Rooted trees, non-reversing labelings and naive tree-polynomial evaluation.

Trees are stored as parent arrays with vertex 0 the root and every parent
index smaller than its child. The canonical code of a vertex is the sorted
concatenation of ``"(" + code(child) + ")"`` over its children, so the
single-vertex tree has the empty code and two rooted trees are isomorphic
iff their codes agree.

Labels are 0-based: vertex "1" of the model is index 0.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .prior import InvalidParameter

MAX_TREE_EDGES = 6
MAX_LABELINGS = 10**8
_CHUNK = 1 << 20


class GuardExceeded(InvalidParameter):
    """Requested enumeration exceeds the configured complexity guard."""


@dataclass(frozen=True)
class RootedTree:
    parent: tuple  # parent[0] == -1

    def __post_init__(self):
        p = self.parent
        if not p or p[0] != -1 or any(not (0 <= p[v] < v) for v in range(1, len(p))):
            raise InvalidParameter(f"invalid parent array {p!r}")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_code(cls, code: str) -> "RootedTree":
        parent = [-1]
        stack = [0]
        for ch in code:
            if ch == "(":
                parent.append(stack[-1])
                stack.append(len(parent) - 1)
            elif ch == ")":
                stack.pop()
            else:
                raise InvalidParameter(f"bad tree code {code!r}")
        if len(stack) != 1:
            raise InvalidParameter(f"unbalanced tree code {code!r}")
        return cls(tuple(parent))

    @classmethod
    def single_vertex(cls) -> "RootedTree":
        return cls((-1,))

    # -- structure --------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.parent)

    @property
    def edge_count(self) -> int:
        return len(self.parent) - 1

    @cached_property
    def children(self) -> tuple:
        ch = [[] for _ in self.parent]
        for v in range(1, len(self.parent)):
            ch[self.parent[v]].append(v)
        return tuple(tuple(c) for c in ch)

    @property
    def edges(self) -> list:
        return [(self.parent[v], v) for v in range(1, len(self.parent))]

    @cached_property
    def depth(self) -> tuple:
        d = [0] * len(self.parent)
        for v in range(1, len(self.parent)):
            d[v] = d[self.parent[v]] + 1
        return tuple(d)

    @property
    def radius(self) -> int:
        return max(self.depth)

    @property
    def root_degree(self) -> int:
        return len(self.children[0])

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs tree distances by BFS from every vertex."""
        m = len(self.parent)
        adj = [[] for _ in range(m)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        dist = np.full((m, m), -1, dtype=int)
        for s in range(m):
            dist[s, s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if dist[s, w] < 0:
                        dist[s, w] = dist[s, u] + 1
                        queue.append(w)
        return dist

    def subtree_code(self, v: int) -> str:
        return "".join(sorted("(" + self.subtree_code(c) + ")" for c in self.children[v]))

    @cached_property
    def canonical_code(self) -> str:
        return self.subtree_code(0)

    def subtree(self, v: int) -> "RootedTree":
        return RootedTree.from_code(self.subtree_code(v))

    def canonical(self) -> "RootedTree":
        return RootedTree.from_code(self.canonical_code)

    def sort_key(self):
        return (self.edge_count, self.canonical_code)

    def __repr__(self):
        return f"RootedTree({self.canonical_code!r})"


# ---------------------------------------------------------------------------
# enumeration and structural operations


@lru_cache(maxsize=None)
def _trees_with_edges(k: int) -> tuple:
    if k == 0:
        return ("",)
    codes = set()
    for code in _trees_with_edges(k - 1):
        t = RootedTree.from_code(code)
        for v in range(t.n_vertices):
            codes.add(RootedTree(t.parent + (v,)).canonical_code)
    return tuple(sorted(codes))


def enumerate_rooted_trees(D: int) -> list:
    """All rooted trees with at most D edges, sorted by (edges, code)."""
    if D < 0:
        raise InvalidParameter("D must be non-negative")
    if D > MAX_TREE_EDGES:
        raise GuardExceeded(f"D={D} exceeds the tree enumeration guard of {MAX_TREE_EDGES} edges")
    return [RootedTree.from_code(c) for k in range(D + 1) for c in _trees_with_edges(k)]


def tree_plus(T: RootedTree) -> RootedTree:
    """Attach a new vertex to the root of T and make it the root."""
    if T.edge_count + 1 > MAX_TREE_EDGES + 1:
        raise GuardExceeded("tree_plus result exceeds the edge guard")
    return RootedTree.from_code("(" + T.canonical_code + ")")


def children_decomposition(T: RootedTree) -> list:
    """Subtrees hanging off the root, each rooted at the root's child."""
    return sorted((T.subtree(c) for c in T.children[0]), key=RootedTree.sort_key)


def attach_under_root(subtrees) -> RootedTree:
    return RootedTree.from_code("".join("(" + s.canonical_code + ")" for s in subtrees))


# ---------------------------------------------------------------------------
# non-reversing labelings


def nr_constraint_pairs(T: RootedTree) -> list:
    """Vertex pairs that must carry different labels in a non-reversing labeling.

    Equal labels are allowed only at distance > 2, or at distance 2 with
    equal depth (siblings); every other pair of distinct vertices is listed.
    """
    d, depth = T.distances, T.depth
    pairs = []
    for u in range(T.n_vertices):
        for v in range(u + 1, T.n_vertices):
            ok = d[u, v] > 2 or (d[u, v] == 2 and depth[u] == depth[v])
            if not ok:
                pairs.append((u, v))
    return pairs


def is_non_reversing(T: RootedTree, labels) -> bool:
    return all(labels[u] != labels[v] for u, v in nr_constraint_pairs(T))


def nr_count(T: RootedTree, n: int) -> int:
    """|nr(T)| for labelings rooted at vertex 1.

    Children of the root have n - 1 choices (they only avoid the root label,
    siblings may coincide); every deeper vertex avoids its parent and
    grandparent, leaving n - 2 choices.
    """
    if n < 3:
        raise InvalidParameter("n must be at least 3")
    k = T.root_degree
    return (n - 1) ** k * (n - 2) ** (T.edge_count - k)


def nr_count_single_branch_formula(T: RootedTree, n: int) -> int:
    """(n-1)(n-2)^{|E|-1}; equals :func:`nr_count` only when the root has degree <= 1."""
    if T.edge_count == 0:
        return 1
    return (n - 1) * (n - 2) ** (T.edge_count - 1)


def nr_directed_count(T: RootedTree, n: int) -> int:
    """|nr(T; i -> j)| = (n - 2)^{|E(T)|}."""
    if n < 3:
        raise InvalidParameter("n must be at least 3")
    return (n - 2) ** T.edge_count


def _check_guard(n: int, m: int, guard: int):
    if n**m > guard:
        raise GuardExceeded(f"n^|V| = {n}^{m} exceeds the enumeration guard {guard:g}")


def _label_chunks(n: int, m_free: int):
    total = n**m_free
    powers = n ** np.arange(m_free - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % n


def enumerate_nr_labelings(T: RootedTree, n: int, mode="rooted_at_1", guard: int = MAX_LABELINGS):
    """Yield arrays (rows = labelings, columns = tree vertices) of nr labelings.

    ``mode`` is "rooted_at_1" (root label 0) or a pair ``(i, j)`` for the
    directed variant: root labelled i and no child of the root labelled j.
    """
    if n < 3:
        raise InvalidParameter("n must be at least 3")
    _check_guard(n, T.n_vertices, guard)
    if mode == "rooted_at_1":
        root, banned = 0, None
    else:
        root, banned = mode
        if root == banned:
            raise InvalidParameter("directed labelings need i != j")
    pairs = nr_constraint_pairs(T)
    root_children = list(T.children[0])
    m_free = T.n_vertices - 1
    if m_free == 0:
        yield np.array([[root]])
        return
    for free in _label_chunks(n, m_free):
        lab = np.empty((free.shape[0], T.n_vertices), dtype=np.int64)
        lab[:, 0] = root
        lab[:, 1:] = free
        keep = np.ones(lab.shape[0], dtype=bool)
        for u, v in pairs:
            keep &= lab[:, u] != lab[:, v]
        if banned is not None:
            for c in root_children:
                keep &= lab[:, c] != banned
        if keep.any():
            yield lab[keep]


def _labeling_sum(T: RootedTree, Y: np.ndarray, mode, guard) -> float:
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    edges = T.edges
    total = 0.0
    for lab in enumerate_nr_labelings(T, n, mode, guard):
        prod = np.ones(lab.shape[0])
        for u, v in edges:
            prod *= Y[lab[:, u], lab[:, v]]
        total += math.fsum(prod)
    return total


def eval_tree_poly(T: RootedTree, Y: np.ndarray, guard: int = MAX_LABELINGS) -> float:
    """F_T(Y) = |nr(T)|^{-1/2} sum over nr labelings rooted at 1 of prod Y."""
    if T.edge_count == 0:
        return 1.0
    n = np.asarray(Y).shape[0]
    return _labeling_sum(T, Y, "rooted_at_1", guard) / math.sqrt(nr_count(T, n))


def eval_tree_poly_directed(T: RootedTree, Y: np.ndarray, i: int, j: int, guard: int = MAX_LABELINGS) -> float:
    """F_{T, i->j}(Y) = n^{-|E|/2} sum over nr labelings rooted at i avoiding j at the root's children."""
    if T.edge_count == 0:
        return 1.0
    n = np.asarray(Y).shape[0]
    return _labeling_sum(T, Y, (i, j), guard) / n ** (T.edge_count / 2)


class DirectedTreeEvaluator:
    """Caches the nr labelings of T over all roots for repeated directed evaluation."""

    def __init__(self, T: RootedTree, n: int, guard: int = MAX_LABELINGS):
        _check_guard(n, T.n_vertices, guard)
        self.T, self.n = T, n
        if T.edge_count == 0:
            self.labels = None
            return
        pairs = nr_constraint_pairs(T)
        lab = np.concatenate(list(_label_chunks(n, T.n_vertices)))
        keep = np.ones(lab.shape[0], dtype=bool)
        for u, v in pairs:
            keep &= lab[:, u] != lab[:, v]
        self.labels = lab[keep]
        self.root_children = list(T.children[0])

    def __call__(self, Y: np.ndarray, i: int, j: int) -> float:
        if self.labels is None:
            return 1.0
        lab = self.labels[self.labels[:, 0] == i]
        for c in self.root_children:
            lab = lab[lab[:, c] != j]
        prod = np.ones(lab.shape[0])
        for u, v in self.T.edges:
            prod *= Y[lab[:, u], lab[:, v]]
        return math.fsum(prod) / self.n ** (self.T.edge_count / 2)
