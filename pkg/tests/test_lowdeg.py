import itertools
import math

import networkx as nx
import numpy as np
import pytest

from amplowdeg.labelsum import BatchContractor, compile_pattern, hermite_matrix, partition_coefficients
from amplowdeg.lowdeg import (GramEstimate, GraphShape, PsiSpec, SingularGram, _compiled_F, _compiled_H,
                              edge_multisets, embedding_count, enumerate_rooted_multigraphs,
                              estimate_c_M, eval_F_batch, eval_H_batch, eval_H_graph, expected_h_gamma,
                              hermite, hermite_gram_quadrature, lowdeg_optimal_mse, optimal_mse_se,
                              tree_graph)
from amplowdeg.model import sample_batch, sample_goe
from amplowdeg.prior import InvalidParameter, make_three_point, point_mass, rademacher
from amplowdeg.trees import GuardExceeded, enumerate_rooted_trees, eval_tree_poly

PRIOR = make_three_point(1.0, 0.01)


def to_nx(A: GraphShape) -> nx.MultiGraph:
    G = nx.MultiGraph()
    G.add_nodes_from(range(A.n_vertices))
    for u, v, m in A.edge_list:
        for _ in range(m):
            G.add_edge(u, v)
    nx.set_node_attributes(G, {v: v == 0 for v in G}, "root")
    return G


def same_rooted(A, B) -> bool:
    return nx.is_isomorphic(to_nx(A), to_nx(B), node_match=lambda a, b: a["root"] == b["root"])


def oracle_graphs(D: int) -> list:
    """Rooted multigraphs (loops allowed) with <= D edges and no isolated non-root vertex."""
    reps = []
    for k in range(D + 1):
        for V in range(1, 2 * k + 2):
            pairs = [(u, v) for u in range(V) for v in range(u, V)]
            for combo in itertools.combinations_with_replacement(pairs, k):
                touched = {x for e in combo for x in e} | {0}
                if len(touched) != V:
                    continue
                A = GraphShape.from_edges(V, combo)
                if not any(A.edge_count == B.edge_count and A.n_vertices == B.n_vertices and same_rooted(A, B)
                           for B in reps):
                    reps.append(A)
    return reps


class TestGraphs:
    def test_counts(self):
        assert [len(enumerate_rooted_multigraphs(D)) for D in range(4)] == [1, 5, 22, 91]

    @pytest.mark.parametrize("D", [1, 2])
    def test_counts_match_networkx(self, D):
        assert len(oracle_graphs(D)) == len(enumerate_rooted_multigraphs(D))

    def test_degree_one_set(self):
        codes = {g.canonical_code for g in enumerate_rooted_multigraphs(1)}
        assert codes == {"1:", "1:0-0", "2:0-1", "2:1-1", "3:1-2"}

    def test_codes_are_isomorphism_invariants(self):
        graphs = enumerate_rooted_multigraphs(2)
        for A, B in itertools.combinations(graphs, 2):
            assert not same_rooted(A, B)
        A = GraphShape.from_edges(3, [(0, 2), (2, 1)])
        B = GraphShape.from_edges(3, [(0, 1), (1, 2)])
        assert A.canonical_code == B.canonical_code

    def test_trees_subset(self):
        trees = {g.canonical_code for g in enumerate_rooted_multigraphs(2) if g.is_tree}
        assert trees == {tree_graph(T).canonical_code for T in enumerate_rooted_trees(2)}
        for code in trees:
            A = [g for g in enumerate_rooted_multigraphs(2) if g.canonical_code == code][0]
            assert tree_graph(A.to_rooted_tree()).canonical_code == code

    def test_components(self):
        A = GraphShape.from_edges(4, [(0, 1), (2, 3), (2, 3)])
        assert len(A.components) == 2

    def test_embedding_count_brute_force(self):
        n = 6
        for A in enumerate_rooted_multigraphs(2):
            brute = sum(1 for lab in itertools.permutations(range(n), A.n_vertices) if lab[0] == 0)
            assert embedding_count(A, n) == brute == math.comb(n - 1, A.n_vertices - 1) * math.factorial(A.n_vertices - 1)


class TestHermite:
    def test_orthonormal_quadrature(self):
        np.testing.assert_allclose(hermite_gram_quadrature(6), np.eye(7), atol=1e-10)

    def test_low_orders(self):
        x = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(hermite(2, x), (x**2 - 1) / math.sqrt(2))
        np.testing.assert_allclose(hermite(3, x), (x**3 - 3 * x) / math.sqrt(6))
        with pytest.raises(InvalidParameter):
            hermite(-1, x)

    def test_expected_h_gamma_examples(self):
        n = 9
        edge = ((0, 1, 1),)
        np.testing.assert_allclose(expected_h_gamma(edge, PRIOR, n), PRIOR.mean**2 / 3)
        loop = ((0, 0, 1),)
        np.testing.assert_allclose(expected_h_gamma(loop, PRIOR, n), PRIOR.second_moment / 3)
        double = ((0, 1, 2),)
        np.testing.assert_allclose(expected_h_gamma(double, PRIOR, n), PRIOR.second_moment**2 / (9 * math.sqrt(2)))

    def test_expected_h_gamma_monte_carlo(self):
        rng = np.random.default_rng(0)
        _, Y = sample_batch(rademacher(), 4, 200_000, rng)
        mc = np.mean(hermite(2, Y[:, 0, 1]))
        np.testing.assert_allclose(mc, expected_h_gamma(((0, 1, 2),), rademacher(), 4), atol=4 * math.sqrt(2 / 200_000))

    def test_debug_single_edge(self):
        # Y all ones off the diagonal, no centering: 3 embeddings of h_1(1) = 1
        Y = np.ones((4, 4))
        A = GraphShape.from_edges(2, [(0, 1)])
        np.testing.assert_allclose(eval_H_graph(Y, A, PRIOR, centered=False), math.sqrt(3))

    def test_guard(self):
        A = GraphShape.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        with pytest.raises(GuardExceeded):
            eval_H_graph(np.zeros((300, 300)), A, PRIOR)

    def test_multisets(self):
        assert len(edge_multisets(3, 1)) == 1 + 6


class TestFastEvaluator:
    def test_partition_coefficients_count_injective(self):
        # sum of coefficients weighted by n^{#blocks - 1} equals the number of injective maps
        m, n = 4, 7
        coef = partition_coefficients(m, list(itertools.combinations(range(m), 2)))
        total = sum(c * n ** (len(set(pi)) - 1) for pi, c in coef.items())
        assert total == math.perm(n - 1, m - 1)

    @pytest.mark.parametrize("n", [5, 7])
    def test_H_matches_brute_force(self, n):
        graphs = enumerate_rooted_multigraphs(2)
        rng = np.random.default_rng(n)
        _, Ys = sample_batch(PRIOR, n, 3, rng)
        fast = eval_H_batch(Ys, graphs, PRIOR)
        for b in range(3):
            slow = [eval_H_graph(Ys[b], A, PRIOR) for A in graphs]
            np.testing.assert_allclose(fast[b], slow, atol=1e-10)

    def test_F_matches_brute_force(self):
        trees = enumerate_rooted_trees(2)
        Ys = np.stack([sample_goe(6, s) for s in range(3)])
        fast = eval_F_batch(Ys, trees)
        for b in range(3):
            np.testing.assert_allclose(fast[b], [eval_tree_poly(T, Ys[b]) for T in trees], atol=1e-12)

    def test_compile_guards(self):
        A = GraphShape.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        with pytest.raises(GuardExceeded):
            _compiled_H(A, PRIOR, 5)
        with pytest.raises(GuardExceeded):
            _compiled_F(enumerate_rooted_trees(3)[-1], 5)

    def test_contractor_edge_piece(self):
        Y = sample_goe(5, 0)[None]
        bc = BatchContractor(Y)
        comp = compile_pattern(2, [(0, 1, 1)], [(0, 1)])
        np.testing.assert_allclose(bc.evaluate(comp), Y[0, 0].sum() - Y[0, 0, 0])
        np.testing.assert_allclose(hermite_matrix(1, Y), Y)


def hand_estimate(c, M, Epsi2, graphs=None):
    c, M = np.asarray(c, float), np.asarray(M, float)
    k = c.size
    return GramEstimate(graphs=graphs or [None] * k, c=c, M=M, c_se=np.zeros(k), M_se=np.zeros((k, k)),
                        samples=1, n=1, Epsi2=Epsi2)


class TestOptimalMse:
    def test_constant_basis_gives_variance(self):
        mse, q = lowdeg_optimal_mse(hand_estimate([PRIOR.mean], [[1.0]], PRIOR.second_moment))
        np.testing.assert_allclose(mse, PRIOR.variance)
        np.testing.assert_allclose(q, [PRIOR.mean])

    def test_perfect_predictor(self):
        mse, _ = lowdeg_optimal_mse(hand_estimate([1.0, 0.0], [[1.0, 0.0], [0.0, 2.0]], 1.0))
        np.testing.assert_allclose(mse, 0.0, atol=1e-15)

    def test_singular(self):
        with pytest.raises(SingularGram) as exc:
            lowdeg_optimal_mse(hand_estimate([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]], 2.0))
        assert abs(exc.value.eigenvalue) < 1e-12

    def test_psi_spec(self):
        assert PsiSpec.parse("atom:10").second_moment(PRIOR) == pytest.approx(0.01)
        assert PsiSpec.parse("square").mean(PRIOR) == pytest.approx(PRIOR.second_moment)
        with pytest.raises(InvalidParameter):
            PsiSpec.parse("cube")
        with pytest.raises(InvalidParameter):
            PsiSpec.parse("atom:3").second_moment(PRIOR)


class TestGramEstimation:
    def test_point_mass_is_deterministic_at_degree_zero(self):
        est = estimate_c_M(point_mass(1.0), "identity", 0, 6, 200, seed=0)
        np.testing.assert_allclose(est.c, [1.0])
        np.testing.assert_allclose(lowdeg_optimal_mse(est)[0], 0.0, atol=1e-14)

    def test_reproducible_and_batch_independent(self):
        a = estimate_c_M(PRIOR, "identity", 1, 6, 2000, seed=3)
        b = estimate_c_M(PRIOR, "identity", 1, 6, 2000, seed=3)
        np.testing.assert_array_equal(a.M, b.M)
        assert a.index(a.graphs[2]) == 2
        sub = a.trees_only()
        assert all(g.is_tree for g in sub.graphs)
        assert np.isfinite(optimal_mse_se(a))

    def test_needs_unit_diagonal(self):
        with pytest.raises(InvalidParameter):
            estimate_c_M(PRIOR, "identity", 1, 6, 100, diagonal="goe")

    def test_gram_diagonal_counts_automorphisms(self):
        # on pure noise M_AA is the number of root-fixing automorphisms of A,
        # since embeddings are ordered labelings
        est = estimate_c_M(point_mass(0.0), "identity", 1, 8, 20000, seed=1)
        match = lambda a, b: a["root"] == b["root"]
        aut = [sum(1 for _ in nx.algorithms.isomorphism.MultiGraphMatcher(
            to_nx(A), to_nx(A), node_match=match).isomorphisms_iter()) for A in est.graphs]
        assert aut == [1, 1, 1, 1, 2]
        np.testing.assert_allclose(np.diag(est.M), aut, atol=5 * est.M_se.diagonal().max() + 1e-12)
