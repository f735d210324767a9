"""Low-degree estimation: centered graph polynomials and their Gram matrix.

For a rooted multigraph A (root = vertex 0, no isolated vertices except the
root), H_A(Y) sums, over injective labelings with the root sent to vertex 1,
the product over connected components gamma of (h_gamma(Y) - E h_gamma(Y)),
normalised by sqrt(|emb(A)|). The best degree-D estimator of psi(theta_1)
has MSE E[psi^2] - <c, M^{-1} c> with c_A = E[H_A psi(theta_1)] and
M_AB = E[H_A H_B]; both are estimated here by Monte Carlo.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .labelsum import BatchContractor, compile_pattern, hermite_matrix
from .model import Diagonal, sample_batch
from .prior import DiscretePrior, InvalidParameter, moment
from .trees import GuardExceeded, RootedTree, enumerate_rooted_trees, nr_constraint_pairs, nr_count

MAX_GRAPH_EDGES = 3
MAX_GRAM_EDGES = 2
MAX_EMBED_TERMS = 10**7
MIN_EIGENVALUE = 1e-8


class SingularGram(np.linalg.LinAlgError):
    def __init__(self, eigenvalue: float):
        super().__init__(f"Gram matrix is near-singular (min eigenvalue {eigenvalue:.3e}); "
                         "increase the sample count or lower D")
        self.eigenvalue = eigenvalue


# ---------------------------------------------------------------------------
# rooted multigraphs


def _edge_code(edges: dict) -> tuple:
    return tuple(sorted(edges.items()))


@dataclass(frozen=True)
class GraphShape:
    """Rooted multigraph; ``edges`` maps (u, v), u <= v, to a multiplicity."""

    n_vertices: int
    edges: tuple  # sorted ((u, v), mult) pairs

    @classmethod
    def from_edges(cls, n_vertices: int, edges) -> "GraphShape":
        acc = {}
        for u, v in edges:
            key = (min(u, v), max(u, v))
            acc[key] = acc.get(key, 0) + 1
        return cls(n_vertices, _edge_code(acc))

    @property
    def root(self) -> int:
        return 0

    @property
    def edge_count(self) -> int:
        return sum(m for _, m in self.edges)

    @property
    def edge_list(self) -> list:
        """(u, v, multiplicity) triples."""
        return [(u, v, m) for (u, v), m in self.edges]

    @cached_property
    def canonical_code(self) -> str:
        best = None
        others = list(range(1, self.n_vertices))
        for perm in itertools.permutations(others):
            relabel = {0: 0, **{v: p for v, p in zip(others, perm)}}
            code = tuple(sorted(((min(relabel[u], relabel[v]), max(relabel[u], relabel[v])), m)
                                for (u, v), m in self.edges))
            if best is None or code < best:
                best = code
        body = ",".join(f"{u}-{v}" + (f"x{m}" if m > 1 else "") for (u, v), m in best)
        return f"{self.n_vertices}:{body}"

    def canonical(self) -> "GraphShape":
        n, _, body = self.canonical_code.partition(":")
        acc = {}
        for part in filter(None, body.split(",")):
            uv, _, m = part.partition("x")
            u, v = map(int, uv.split("-"))
            acc[(u, v)] = int(m) if m else 1
        return GraphShape(int(n), _edge_code(acc))

    @cached_property
    def components(self) -> tuple:
        """Connected components C(alpha): tuples of (u, v, mult) edges."""
        adj = {v: set() for v in range(self.n_vertices)}
        for (u, v), _ in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        comps, seen = [], set()
        for (u0, _), _ in self.edges:
            if u0 in seen:
                continue
            comp, stack = set(), [u0]
            while stack:
                x = stack.pop()
                if x not in comp:
                    comp.add(x)
                    stack.extend(adj[x] - comp)
            seen |= comp
            comps.append(tuple((u, v, m) for (u, v), m in self.edges if u in comp))
        return tuple(comps)

    @property
    def has_self_loop(self) -> bool:
        return any(u == v for (u, v), _ in self.edges)

    @property
    def has_multi_edge(self) -> bool:
        return any(m > 1 for _, m in self.edges)

    @property
    def is_tree(self) -> bool:
        if self.edge_count == 0:
            return self.n_vertices == 1
        comps = self.components
        if len(comps) != 1 or self.has_self_loop or self.has_multi_edge:
            return False
        return any(0 in (u, v) for u, v, _ in comps[0]) and self.n_vertices == self.edge_count + 1

    def to_rooted_tree(self) -> RootedTree:
        if not self.is_tree:
            raise InvalidParameter("graph is not a tree")
        adj = {v: [] for v in range(self.n_vertices)}
        for (u, v), _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        order, parent, seen = [0], {0: -1}, {0}
        for x in order:
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    parent[y] = x
                    order.append(y)
        pos = {v: k for k, v in enumerate(order)}
        return RootedTree(tuple(-1 if v == 0 else pos[parent[v]] for v in order)).canonical()

    def sort_key(self):
        return (self.edge_count, self.canonical_code)

    def __repr__(self):
        return f"GraphShape({self.canonical_code!r})"


def _valid(n_vertices: int, edges: dict) -> bool:
    touched = {0}
    for u, v in edges:
        touched.update((u, v))
    return len(touched) == n_vertices


@lru_cache(maxsize=None)
def _graphs_with_edges(k: int) -> tuple:
    if k == 0:
        return (GraphShape(1, ()),)
    found = {}
    for g in _graphs_with_edges(k - 1):
        V = g.n_vertices
        base = dict(g.edges)
        for u in range(V + 1):
            for v in range(u, V + 2):
                if v == V + 1 and u != V:
                    continue  # second new vertex only together with the first
                nv = max(V, u + 1, v + 1)
                edges = dict(base)
                edges[(u, v)] = edges.get((u, v), 0) + 1
                if not _valid(nv, edges):
                    continue
                cand = GraphShape(nv, _edge_code(edges))
                found.setdefault(cand.canonical_code, cand.canonical())
    return tuple(sorted(found.values(), key=GraphShape.sort_key))


def enumerate_rooted_multigraphs(D: int) -> list:
    """All rooted multigraphs with at most D edges (with multiplicity), canonically sorted."""
    if D < 0:
        raise InvalidParameter("D must be non-negative")
    if D > MAX_GRAPH_EDGES:
        raise GuardExceeded(f"D={D} exceeds the multigraph enumeration guard of {MAX_GRAPH_EDGES}")
    return [g for k in range(D + 1) for g in _graphs_with_edges(k)]


def tree_graph(T: RootedTree) -> GraphShape:
    return GraphShape.from_edges(T.n_vertices, T.edges).canonical()


# ---------------------------------------------------------------------------
# Hermite layer


def hermite(k: int, x):
    """Orthonormal Hermite polynomial h_k(x) (h_0 = 1, h_1 = x, h_2 = (x^2 - 1)/sqrt 2)."""
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    out = hermite_matrix(k, np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def expected_h_gamma(gamma, prior: DiscretePrior, n: int) -> float:
    """E h_gamma(Y) = n^{-|gamma|/2} prod_v E[Theta^{d_v}] / sqrt(gamma!) under UNIT_VAR1.

    ``gamma`` is a component given as (u, v, mult) triples; self-loops add
    2 * mult to the degree of their vertex.
    """
    deg, size, fact = {}, 0, 1
    for u, v, m in gamma:
        deg[u] = deg.get(u, 0) + m
        deg[v] = deg.get(v, 0) + m
        size += m
        fact *= math.factorial(m)
    if size == 0:
        raise InvalidParameter("component must have at least one edge")
    val = n ** (-size / 2) / math.sqrt(fact)
    for d in deg.values():
        val *= moment(prior, d)
    return val


def embedding_count(A: GraphShape, n: int) -> int:
    """|emb(A)| = binom(n-1, |V|-1) (|V|-1)!."""
    k = A.n_vertices - 1
    return math.comb(n - 1, k) * math.factorial(k)


def _require_unit(diagonal):
    if Diagonal.parse(diagonal) is not Diagonal.UNIT_VAR1:
        raise InvalidParameter(
            "the Hermite basis needs unit-variance diagonal noise (UNIT_VAR1); tree-structured "
            "polynomials do not read the diagonal, so this convention loses nothing")


def eval_H_graph(Y: np.ndarray, A: GraphShape, prior: DiscretePrior, n: int | None = None,
                 centered: bool = True, guard: int = MAX_EMBED_TERMS) -> float:
    """Brute-force H_A(Y): explicit sum over injective labelings with the root at index 0."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] if n is None else n
    if A.edge_count == 0:
        return 1.0
    if n ** (A.n_vertices - 1) > guard:
        raise GuardExceeded(f"n^(|V|-1) = {n}^{A.n_vertices - 1} exceeds {guard:g}")
    lab = np.array(list(itertools.permutations(range(1, n), A.n_vertices - 1)), dtype=np.int64)
    lab = np.hstack([np.zeros((lab.shape[0], 1), dtype=np.int64), lab])
    total = np.ones(lab.shape[0])
    for gamma in A.components:
        h = np.ones(lab.shape[0])
        for u, v, m in gamma:
            h *= hermite_matrix(m, Y[lab[:, u], lab[:, v]])
        total *= h - (expected_h_gamma(gamma, prior, n) if centered else 0.0)
    return math.fsum(total) / math.sqrt(embedding_count(A, n))


# ---------------------------------------------------------------------------
# compiled (fast) evaluation


@lru_cache(maxsize=None)
def _compiled_H(A: GraphShape, prior: DiscretePrior, n: int) -> dict:
    if A.edge_count > MAX_GRAM_EDGES:
        raise GuardExceeded(f"fast evaluation supports at most {MAX_GRAM_EDGES} edges")
    m = A.n_vertices
    all_pairs = list(itertools.combinations(range(m), 2))
    comps = A.components
    consts = [expected_h_gamma(g, prior, n) for g in comps]
    norm = 1.0 / math.sqrt(embedding_count(A, n))
    total = {}
    for mask in itertools.product((0, 1), repeat=len(comps)):
        coef = norm
        edges = []
        for keep, g, c in zip(mask, comps, consts):
            if keep:
                edges += list(g)
            else:
                coef *= -c
        if coef == 0:
            continue
        for key, val in compile_pattern(m, edges, all_pairs).items():
            total[key] = total.get(key, 0.0) + coef * val
    return total


@lru_cache(maxsize=None)
def _compiled_F(T: RootedTree, n: int) -> dict:
    if T.edge_count > MAX_GRAM_EDGES:
        raise GuardExceeded(f"fast evaluation supports at most {MAX_GRAM_EDGES} edges")
    norm = 1.0 / math.sqrt(nr_count(T, n)) if T.edge_count else 1.0
    edges = [(u, v, 1) for u, v in T.edges]
    return {k: norm * c for k, c in compile_pattern(T.n_vertices, edges, nr_constraint_pairs(T)).items()}


def eval_H_batch(Ys: np.ndarray, graphs, prior: DiscretePrior, contractor: BatchContractor | None = None) -> np.ndarray:
    """H_A(Y) for a batch (b, n, n) and each graph; returns (b, len(graphs))."""
    bc = contractor or BatchContractor(Ys)
    n = bc.n
    return np.stack([bc.evaluate(_compiled_H(A, prior, n)) for A in graphs], axis=1)


def eval_F_batch(Ys: np.ndarray, trees, contractor: BatchContractor | None = None) -> np.ndarray:
    """Tree polynomials F_T(Y) for a batch; returns (b, len(trees))."""
    bc = contractor or BatchContractor(Ys)
    return np.stack([bc.evaluate(_compiled_F(T, bc.n)) for T in trees], axis=1)


# ---------------------------------------------------------------------------
# target functions


@dataclass(frozen=True)
class PsiSpec:
    kind: str  # identity | square | atom
    atom: float | None = None

    @classmethod
    def parse(cls, spec) -> "PsiSpec":
        if isinstance(spec, PsiSpec):
            return spec
        name, _, arg = str(spec).partition(":")
        if name in ("identity", "square"):
            return cls(name)
        if name in ("atom", "atom-indicator", "indicator"):
            if not arg:
                raise InvalidParameter("atom indicator needs a value, e.g. 'atom:1.0'")
            return cls("atom", float(arg))
        raise InvalidParameter(f"psi must be identity, square or atom:<value>, got {spec!r}")

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return theta
        if self.kind == "square":
            return theta**2
        return np.isclose(theta, self.atom, rtol=0, atol=1e-12).astype(float)

    def second_moment(self, prior: DiscretePrior) -> float:
        if self.kind == "identity":
            return prior.second_moment
        if self.kind == "square":
            return moment(prior, 4)
        if not np.any(np.isclose(prior.a, self.atom, rtol=0, atol=1e-12)):
            raise InvalidParameter(f"{self.atom} is not an atom of the prior")
        return float(prior.w[np.isclose(prior.a, self.atom, rtol=0, atol=1e-12)][0])

    def mean(self, prior: DiscretePrior) -> float:
        return float(prior.w @ self(prior.a))

    def __str__(self):
        return self.kind if self.atom is None else f"atom:{self.atom:g}"


# ---------------------------------------------------------------------------
# Monte-Carlo Gram estimation


@dataclass
class GramEstimate:
    graphs: list
    c: np.ndarray
    M: np.ndarray
    c_se: np.ndarray
    M_se: np.ndarray
    samples: int
    n: int
    Epsi2: float
    psi: str = "identity"
    group_c: np.ndarray = field(default=None, repr=False)  # per-group means, for the jackknife
    group_M: np.ndarray = field(default=None, repr=False)

    def index(self, A: GraphShape) -> int:
        code = A.canonical_code
        for k, g in enumerate(self.graphs):
            if g.canonical_code == code:
                return k
        raise KeyError(code)

    def restrict(self, idx) -> "GramEstimate":
        idx = np.asarray(idx, dtype=int)
        return GramEstimate(
            graphs=[self.graphs[i] for i in idx], c=self.c[idx], M=self.M[np.ix_(idx, idx)],
            c_se=self.c_se[idx], M_se=self.M_se[np.ix_(idx, idx)], samples=self.samples, n=self.n,
            Epsi2=self.Epsi2, psi=self.psi,
            group_c=None if self.group_c is None else self.group_c[:, idx],
            group_M=None if self.group_M is None else self.group_M[:, idx][:, :, idx])

    def up_to_degree(self, D: int) -> "GramEstimate":
        return self.restrict([k for k, g in enumerate(self.graphs) if g.edge_count <= D])

    def trees_only(self) -> "GramEstimate":
        return self.restrict([k for k, g in enumerate(self.graphs) if g.is_tree])


def _batch_size(n: int, budget: float = 4e6) -> int:
    return max(1, int(budget // (n * n)))


def estimate_c_M(prior: DiscretePrior, psi, D: int, n: int, samples: int, seed: int = 0,
                 diagonal=Diagonal.UNIT_VAR1, groups: int = 50, graphs=None,
                 transform=None) -> GramEstimate:
    """Monte-Carlo averages of H_A psi(theta_1) and H_A H_B over ``samples`` draws.

    Samples are split into ``groups`` blocks, each driven by its own
    generator derived from (seed, n, block index), so the result does not
    depend on the batch size. ``transform`` (optional) maps each sampled
    batch (theta, Y) to another, e.g. a vertex relabeling.
    """
    _require_unit(diagonal)
    psi = PsiSpec.parse(psi)
    if D > MAX_GRAM_EDGES:
        raise GuardExceeded(f"Gram estimation supports D <= {MAX_GRAM_EDGES}")
    if samples < groups:
        groups = max(1, samples)
    graphs = enumerate_rooted_multigraphs(D) if graphs is None else list(graphs)
    K = len(graphs)
    bsz = _batch_size(n)
    seqs = np.random.SeedSequence([seed, n]).spawn(groups)
    sizes = [samples // groups + (g < samples % groups) for g in range(groups)]
    gc, gM = np.zeros((groups, K)), np.zeros((groups, K, K))
    c2, M2 = np.zeros(K), np.zeros((K, K))
    for g, (ss, size) in enumerate(zip(seqs, sizes)):
        rng = np.random.default_rng(ss)
        done = 0
        while done < size:
            b = min(bsz, size - done)
            theta, Y = sample_batch(prior, n, b, rng, diagonal=Diagonal.UNIT_VAR1)
            if transform is not None:
                theta, Y = transform(theta, Y)
            H = eval_H_batch(Y, graphs, prior)
            Hp = H * psi(theta[:, 0])[:, None]
            gc[g] += Hp.sum(axis=0)
            gM[g] += H.T @ H
            c2 += (Hp**2).sum(axis=0)
            H2 = H**2
            M2 += H2.T @ H2
            done += b
        gc[g] /= size
        gM[g] /= size
    w = np.asarray(sizes, dtype=float) / samples
    c = w @ gc
    M = np.tensordot(w, gM, axes=1)
    M = 0.5 * (M + M.T)
    c_se = np.sqrt(np.maximum(c2 / samples - c**2, 0.0) / samples)
    M_se = np.sqrt(np.maximum(M2 / samples - M**2, 0.0) / samples)
    return GramEstimate(graphs=graphs, c=c, M=M, c_se=c_se, M_se=M_se, samples=samples, n=n,
                        Epsi2=psi.second_moment(prior), psi=str(psi), group_c=gc, group_M=gM)


def lowdeg_optimal_mse(est: GramEstimate, Epsi2: float | None = None):
    """E[psi^2] - <c, M^{-1} c> and the optimiser q = M^{-1} c (Cholesky solve)."""
    Epsi2 = est.Epsi2 if Epsi2 is None else Epsi2
    M = 0.5 * (est.M + est.M.T)
    lam = float(np.linalg.eigvalsh(M).min())
    if lam <= MIN_EIGENVALUE:
        raise SingularGram(lam)
    q = cho_solve(cho_factor(M), est.c)
    return float(Epsi2 - est.c @ q), q


def _quad_form(c, M):
    M = 0.5 * (M + M.T)
    return float(c @ cho_solve(cho_factor(M), c))


def optimal_mse_se(est: GramEstimate) -> float:
    """Delete-one-group jackknife standard error of :func:`lowdeg_optimal_mse`."""
    if est.group_c is None or est.group_c.shape[0] < 2:
        return float("nan")
    G = est.group_c.shape[0]
    tot_c, tot_M = est.group_c.sum(axis=0), est.group_M.sum(axis=0)
    vals = np.array([_quad_form((tot_c - est.group_c[g]) / (G - 1), (tot_M - est.group_M[g]) / (G - 1))
                     for g in range(G)])
    return float(math.sqrt((G - 1) / G * np.sum((vals - vals.mean()) ** 2)))


# ---------------------------------------------------------------------------
# structural reports


@dataclass
class DecayEntry:
    label: str
    value_small: float
    se_small: float
    value_large: float
    se_large: float

    @property
    def significant(self) -> bool:
        return abs(self.value_small) > 5 * self.se_small

    @property
    def shrinks(self) -> bool:
        return abs(self.value_small) - abs(self.value_large) > 2 * math.hypot(self.se_small, self.se_large)


@dataclass
class BlockReport:
    n_list: list
    min_eigenvalues: list
    max_nontree_c: list
    max_cross_M: list
    entries: list  # DecayEntry for every non-tree c and every (tree, non-tree) M entry
    eig_threshold: float = 0.1

    @property
    def eigen_ok(self) -> bool:
        return all(v >= self.eig_threshold for v in self.min_eigenvalues)

    @property
    def decay_ok(self) -> bool:
        return all(e.shrinks for e in self.entries if e.significant)

    @property
    def passed(self) -> bool:
        return self.eigen_ok and self.decay_ok


def block_structure_report(prior: DiscretePrior, psi, D: int, n_list, samples: int, seed: int = 0,
                           estimates=None) -> BlockReport:
    n_list = list(n_list)
    if n_list != sorted(n_list):
        raise InvalidParameter("n_list must be ascending")
    ests = estimates or [estimate_c_M(prior, psi, D, n, samples, seed) for n in n_list]
    graphs = ests[0].graphs
    tree_idx = [k for k, g in enumerate(graphs) if g.is_tree]
    non_idx = [k for k, g in enumerate(graphs) if not g.is_tree]
    mins, maxc, maxM = [], [], []
    for est in ests:
        mins.append(float(np.linalg.eigvalsh(est.M).min()))
        maxc.append(float(np.max(np.abs(est.c[non_idx]))) if non_idx else 0.0)
        maxM.append(float(np.max(np.abs(est.M[np.ix_(tree_idx, non_idx)]))) if non_idx else 0.0)
    lo, hi = ests[0], ests[-1]
    entries = []
    for b in non_idx:
        entries.append(DecayEntry(f"c[{graphs[b].canonical_code}]", lo.c[b], lo.c_se[b], hi.c[b], hi.c_se[b]))
    for a in tree_idx:
        for b in non_idx:
            entries.append(DecayEntry(f"M[{graphs[a].canonical_code}|{graphs[b].canonical_code}]",
                                      lo.M[a, b], lo.M_se[a, b], hi.M[a, b], hi.M_se[a, b]))
    return BlockReport(n_list=n_list, min_eigenvalues=mins, max_nontree_c=maxc, max_cross_M=maxM,
                       entries=entries)


@dataclass
class BasisRow:
    tree: str
    n: int
    residual_ms: float
    residual_se: float
    self_coef: float
    self_coef_se: float


@dataclass
class BasisReport:
    rows: list

    def by_tree(self, code: str) -> list:
        return [r for r in self.rows if r.tree == code]

    @property
    def passed(self) -> bool:
        """Residual MS falls from the smallest to the largest n (or is exactly zero at both)."""
        ok = True
        for code in {r.tree for r in self.rows}:
            rs = sorted(self.by_tree(code), key=lambda r: r.n)
            lo, hi = rs[0], rs[-1]
            exact = lo.residual_ms < 1e-12 and hi.residual_ms < 1e-12
            ok &= exact or hi.residual_ms < lo.residual_ms
        return ok


def tree_basis_consistency(prior: DiscretePrior, D: int, n, samples: int, seed: int = 0) -> BasisReport:
    """Regress H_A (A a tree) on the tree polynomials {F_B} and report residuals.

    ``n`` may be a single size or a list of sizes.
    """
    if D > MAX_GRAM_EDGES:
        raise GuardExceeded(f"tree basis check supports D <= {MAX_GRAM_EDGES}")
    n_list = [n] if np.isscalar(n) else list(n)
    trees = enumerate_rooted_trees(D)
    graphs = [tree_graph(T) for T in trees]
    rows = []
    for nn in n_list:
        rng = np.random.default_rng(np.random.SeedSequence([seed, nn, 7]))
        H_all, F_all = [], []
        done, bsz = 0, _batch_size(nn)
        while done < samples:
            b = min(bsz, samples - done)
            _, Y = sample_batch(prior, nn, b, rng, diagonal=Diagonal.UNIT_VAR1)
            bc = BatchContractor(Y)
            H_all.append(eval_H_batch(Y, graphs, prior, bc))
            F_all.append(eval_F_batch(Y, trees, bc))
            done += b
        H, F = np.concatenate(H_all), np.concatenate(F_all)
        XtX_inv = np.linalg.inv(F.T @ F)
        for a, T in enumerate(trees):
            beta, *_ = np.linalg.lstsq(F, H[:, a], rcond=None)
            r = H[:, a] - F @ beta
            r2 = r**2
            ms = float(r2.mean())
            sigma2 = float(r2.sum() / max(samples - F.shape[1], 1))
            rows.append(BasisRow(tree=T.canonical_code, n=nn, residual_ms=ms,
                                 residual_se=float(r2.std(ddof=1) / math.sqrt(samples)),
                                 self_coef=float(beta[a]),
                                 self_coef_se=float(math.sqrt(sigma2 * XtX_inv[a, a]))))
    return BasisReport(rows=rows)


# ---------------------------------------------------------------------------
# orthonormality checks


def hermite_gram_quadrature(kmax: int = 6, level: int = 60) -> np.ndarray:
    """E[h_j(G) h_k(G)] for j, k <= kmax by Gauss-Hermite quadrature."""
    from .prior import gauss_quadrature

    quad = gauss_quadrature(level)
    H = np.stack([hermite_matrix(k, quad.nodes) for k in range(kmax + 1)])
    return (H * quad.weights) @ H.T


def edge_multisets(n: int, max_edges: int) -> list:
    """All alpha in N^Pairs (pairs including the diagonal) with |alpha| <= max_edges."""
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    out = []
    for k in range(max_edges + 1):
        for combo in itertools.combinations_with_replacement(range(len(pairs)), k):
            alpha = {}
            for p in combo:
                alpha[pairs[p]] = alpha.get(pairs[p], 0) + 1
            out.append(tuple(sorted(alpha.items())))
    return out


def _pair_orbit_key(alpha, beta) -> tuple:
    verts = sorted({x for (u, v), _ in alpha + beta for x in (u, v)})
    best = None
    for perm in itertools.permutations(range(len(verts))):
        rel = dict(zip(verts, perm))
        code = tuple(tuple(sorted(((min(rel[u], rel[v]), max(rel[u], rel[v])), m) for (u, v), m in side))
                     for side in (alpha, beta))
        if best is None or code < best:
            best = code
    return best


@dataclass
class OrthoReport:
    n: int
    samples: int
    keys: list  # orbit representatives
    means: np.ndarray  # orbit-averaged E[h_alpha h_beta]
    se: np.ndarray
    targets: np.ndarray
    entries: int  # number of (alpha, beta) pairs with alpha <= beta
    entries_beyond_3se: int  # per-entry exceedances before orbit pooling (diagnostic)

    @property
    def z(self) -> np.ndarray:
        diff = self.means - self.targets
        out = np.zeros_like(diff)
        ok = self.se > 0
        out[ok] = diff[ok] / self.se[ok]
        out[~ok & (np.abs(diff) > 1e-12)] = np.inf
        return out

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= 3))


def multivariate_orthonormality(n: int = 6, samples: int = 10**6, seed: int = 0, max_edges: int = 2,
                                groups: int = 100, batch: int = 2000) -> OrthoReport:
    """Monte-Carlo Gram matrix of {h_alpha(Z)} on unit-diagonal pure noise.

    Pure noise is exchangeable under every relabeling of [n], so all (alpha,
    beta) pairs in one orbit share the same expectation. Entries are pooled
    within orbits and each orbit mean is compared with delta_{alpha beta};
    standard errors come from batch means over ``groups`` sample blocks.
    """
    alphas = edge_multisets(n, max_edges)
    K = len(alphas)
    orbit_of, keys = {}, []
    pair_orbit = np.empty((K, K), dtype=np.int64)
    for a in range(K):
        for b in range(a, K):
            key = _pair_orbit_key(alphas[a], alphas[b]) if a != b else ("diag", _pair_orbit_key(alphas[a], ()))
            if key not in orbit_of:
                orbit_of[key] = len(keys)
                keys.append(key)
            pair_orbit[a, b] = pair_orbit[b, a] = orbit_of[key]
    n_orb = len(keys)
    iu = np.triu_indices(K)
    orb_flat = pair_orbit[iu]
    counts = np.bincount(orb_flat, minlength=n_orb).astype(float)
    targets = np.array([1.0 if k[0] == "diag" else 0.0 for k in keys])

    ii, jj = np.triu_indices(n)
    pair_index = {(int(i), int(j)): p for p, (i, j) in enumerate(zip(ii, jj))}
    seqs = np.random.SeedSequence([seed, n, 11]).spawn(groups)
    sizes = [samples // groups + (g < samples % groups) for g in range(groups)]
    group_means = np.zeros((groups, n_orb))
    e1, e2 = np.zeros((K, K)), np.zeros((K, K))
    for g, (ss, size) in enumerate(zip(seqs, sizes)):
        rng = np.random.default_rng(ss)
        acc = np.zeros((K, K))
        done = 0
        while done < size:
            b = min(batch, size - done)
            Z = rng.standard_normal((b, len(ii)))
            hz = {k: hermite_matrix(k, Z) for k in range(max_edges + 1)}
            H = np.ones((b, K))
            for a, alpha in enumerate(alphas):
                for (u, v), m in alpha:
                    H[:, a] *= hz[m][:, pair_index[(u, v)]]
            acc += H.T @ H
            H2 = H**2
            e2 += H2.T @ H2
            done += b
        e1 += acc
        group_means[g] = np.bincount(orb_flat, weights=(acc / size)[iu], minlength=n_orb) / counts
    w = np.asarray(sizes, dtype=float) / samples
    means = w @ group_means
    se = group_means.std(axis=0, ddof=1) / math.sqrt(groups)
    E = e1 / samples
    Ese = np.sqrt(np.maximum(e2 / samples - E**2, 0.0) / samples)[iu]
    dev = np.abs(E - np.eye(K))[iu]
    beyond = int(np.sum((Ese > 0) & (dev > 3 * Ese)))
    return OrthoReport(n=n, samples=samples, keys=keys, means=means, se=se, targets=targets,
                       entries=int(iu[0].size), entries_beyond_3se=beyond)


@dataclass
class MeanZeroReport:
    codes: list
    means: np.ndarray
    se: np.ndarray

    @property
    def z(self):
        return self.means / self.se

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) < 4))


def centered_mean_check(prior: DiscretePrior, D: int, n: int, samples: int, seed: int = 0) -> MeanZeroReport:
    """Monte-Carlo E[H_A(Y)] for every A with at least one edge."""
    graphs = [g for g in enumerate_rooted_multigraphs(D) if g.edge_count > 0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, 13]))
    s1, s2 = np.zeros(len(graphs)), np.zeros(len(graphs))
    done, bsz = 0, _batch_size(n)
    while done < samples:
        b = min(bsz, samples - done)
        _, Y = sample_batch(prior, n, b, rng, diagonal=Diagonal.UNIT_VAR1)
        H = eval_H_batch(Y, graphs, prior)
        s1 += H.sum(axis=0)
        s2 += (H**2).sum(axis=0)
        done += b
    means = s1 / samples
    se = np.sqrt(np.maximum(s2 / samples - means**2, 0.0) / samples)
    return MeanZeroReport(codes=[g.canonical_code for g in graphs], means=means, se=se)
