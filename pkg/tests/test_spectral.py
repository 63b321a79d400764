import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanaug import oracle
from spanaug.graph import (Graph, complement_direction, from_edges, generate_random_geometric, generate_sbm,
                           normalized_laplacian)
from spanaug.spectral import (DegenerateSpectrumWarning, NoiseSpec, SpectralSelection, algebraic_connectivity,
                              apply_spectral_filter, connected_components_spectral, diameter_bounds,
                              diffusion_distance, eig_full, eig_selective, eigen_change_magnitude,
                              first_order_eigen_change, graph_spectrum, make_filter, spectral_distance,
                              spectrum_norm_grad, spectrum_norm_sq, union_find_components)


class TestEigFull:
    def test_single_edge(self):
        assert np.allclose(eig_full(np.array([[1.0, -1], [-1, 1]])).values, [0, 2])

    def test_k3(self, k3):
        assert np.allclose(eig_full(normalized_laplacian(k3)).values, [0, 1.5, 1.5])

    def test_reconstruction_and_invariants(self, rng):
        m = rng.normal(size=(8, 8))
        m = m + m.T
        es = eig_full(m)
        assert np.linalg.norm(es.reconstruct() - m) < 1e-8
        assert np.allclose(es.vectors.T @ es.vectors, np.eye(8), atol=1e-10)
        assert np.all(np.diff(es.values) >= 0)

    def test_sign_convention(self, rng):
        es = eig_full(normalized_laplacian(generate_sbm(20, 2, 0.5, 0.1, seed=1)))
        for col in es.vectors.T:
            first = col[np.abs(col) > 1e-10][0]
            assert first > 0

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            eig_full(np.array([[0.0, 1], [0, 0]]))


class TestEigSelective:
    def test_path10(self):
        g = from_edges(10, [(i, i + 1) for i in range(9)])
        lap = normalized_laplacian(g)
        full = eig_full(lap).values
        es = eig_selective(lap, SpectralSelection(2))
        assert np.allclose(es.values, np.r_[full[:2], full[-2:]], atol=1e-8)

    def test_degenerate_selection_is_full(self, k3):
        lap = normalized_laplacian(k3)
        assert np.allclose(eig_selective(lap, SpectralSelection(2)).values, eig_full(lap).values)

    def test_k1_on_k3(self, k3):
        assert np.allclose(eig_selective(normalized_laplacian(k3), SpectralSelection(1)).values, [0, 1.5])

    def test_multiplicity_and_residuals(self):
        # a union of identical cliques has heavily repeated eigenvalues at both ends
        blocks = [from_edges(5, [(i, j) for i in range(5) for j in range(i + 1, 5)]).adjacency] * 6
        a = np.zeros((30, 30))
        for b, blk in enumerate(blocks):
            a[5 * b:5 * b + 5, 5 * b:5 * b + 5] = blk
        lap = normalized_laplacian(Graph(a))
        es = eig_selective(lap, SpectralSelection(7))
        full = eig_full(lap).values
        assert np.allclose(es.values, np.r_[full[:7], full[-7:]], atol=1e-8)
        resid = np.linalg.norm(lap @ es.vectors - es.vectors * es.values, axis=0)
        assert resid.max() < 1e-8

    def test_fallback_flag(self):
        lap = normalized_laplacian(generate_sbm(40, 2, 0.5, 0.1, seed=0))
        with pytest.warns(Warning, match="Lanczos"):
            es = eig_selective(lap, SpectralSelection(3), max_iter=1)
        assert es.info.get("fallback") is True
        assert np.allclose(es.values, np.r_[eig_full(lap).values[:3], eig_full(lap).values[-3:]])


class TestObjective:
    def test_k3_value(self, k3):
        c = complement_direction(k3)
        assert spectrum_norm_sq(k3, c, np.zeros((3, 3))) == pytest.approx(4.5)

    def test_edge_value(self, edge2):
        assert spectrum_norm_sq(edge2, complement_direction(edge2), np.zeros((2, 2))) == pytest.approx(4.0)

    def test_frobenius_identity(self, rng):
        # full-spectrum Σλ² equals the squared Frobenius norm of the Laplacian
        g = generate_sbm(20, 2, 0.5, 0.1, seed=4)
        c = complement_direction(g)
        d = np.where(g.adjacency == 1, 0.05, 0.0)
        a = g.adjacency + c * d
        lap = np.eye(20) - a / np.sqrt(np.outer(a.sum(1), a.sum(1)))
        assert spectrum_norm_sq(g, c, d) == pytest.approx(np.sum(lap ** 2), rel=1e-12)

    def test_uniform_edge_scaling_leaves_value_unchanged(self):
        # A + C∘(σ on edges) = (1 − σ)A, and the normalized Laplacian ignores scale
        g = generate_sbm(20, 2, 0.5, 0.1, seed=4)
        c = complement_direction(g)
        d = np.where(g.adjacency == 1, 0.05, 0.0)
        base = spectrum_norm_sq(g, c, 0 * d)
        assert spectrum_norm_sq(g, c, d) == pytest.approx(base, rel=1e-12)
        d2 = d * np.random.default_rng(0).uniform(0, 2, d.shape)
        d2 = np.triu(d2, 1) + np.triu(d2, 1).T
        a = g.adjacency + c * d2
        exact = np.sum(np.linalg.eigvalsh(np.eye(20) - a / np.sqrt(np.outer(a.sum(1), a.sum(1)))) ** 2)
        assert spectrum_norm_sq(g, c, d2) == pytest.approx(exact, rel=1e-12)
        assert abs(spectrum_norm_sq(g, c, d2) - base) > 1e-6

    def test_gradient_fd_sbm12(self):
        g = generate_sbm(12, 2, 0.6, 0.15, seed=8)
        c = complement_direction(g)
        d = np.triu(np.random.default_rng(0).uniform(0.05, 0.4, (12, 12)), 1)
        d = d + d.T
        noise = NoiseSpec(1e-6, 3)
        fd = oracle.fd_gradient(lambda x: spectrum_norm_sq(g, c, x, None, noise), d)
        an = spectrum_norm_grad(g, c, d, None, noise)
        assert np.allclose(an, fd, rtol=1e-4, atol=1e-8)
        assert np.array_equal(an, an.T)

    def test_two_node_pair_is_scale_invariant(self):
        # any positive weight gives [[1, -1], [-1, 1]]: the interior gradient vanishes,
        # and adding structure only shows up as the jump from L = I at Δ = 0
        g = Graph(np.zeros((2, 2)))
        c = complement_direction(g)
        d = np.array([[0, 0.3], [0.3, 0]])
        assert abs(spectrum_norm_grad(g, c, d)[0, 1]) < 1e-12
        assert spectrum_norm_sq(g, c, d) == pytest.approx(4.0)
        assert spectrum_norm_sq(g, c, 0 * d) == pytest.approx(2.0)

    def test_adding_edge_to_sparse_graph_direction(self):
        # on a 4-node path, the gradient sign predicts the effect of a small finite step
        g = from_edges(4, [(0, 1), (1, 2), (2, 3)])
        c = complement_direction(g)
        d = np.full((4, 4), 0.1)
        np.fill_diagonal(d, 0)
        grad = spectrum_norm_grad(g, c, d)
        step = d.copy()
        step[0, 3] = step[3, 0] = 0.1 + 1e-4
        assert np.sign(spectrum_norm_sq(g, c, step) - spectrum_norm_sq(g, c, d)) == np.sign(grad[0, 3])

    def test_single_edge_eigvector_outer(self):
        es = eig_full(np.array([[1.0, -1], [-1, 1]]))
        u = es.vectors[:, 1]
        assert np.allclose(np.outer(u, u), [[0.5, -0.5], [-0.5, 0.5]])

    def test_degenerate_warning_without_noise(self):
        cyc = from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
        with pytest.warns(DegenerateSpectrumWarning):
            spectrum_norm_grad(cyc, complement_direction(cyc), np.zeros((6, 6)), None, NoiseSpec(0.0))

    def test_noise_matrix(self):
        m = NoiseSpec(1e-6, 1).matrix(5)
        assert np.array_equal(m, m.T) and np.all(np.diag(m) == 0) and m.max() <= 1e-6
        assert np.array_equal(m, NoiseSpec(1e-6, 1).matrix(5))


class TestProperties:
    def test_distance_examples(self, k3, p3):
        assert spectral_distance(k3, k3) == 0
        assert spectral_distance(k3, p3) == pytest.approx(np.sqrt(0.5))
        assert spectral_distance(p3, k3) == spectral_distance(k3, p3)

    def test_distance_triangle(self, rng, make_graph):
        for _ in range(20):
            a, b, c = (make_graph(rng, 9) for _ in range(3))
            assert spectral_distance(a, c) <= spectral_distance(a, b) + spectral_distance(b, c) + 1e-12

    def test_algebraic_connectivity(self, k3, p3):
        assert algebraic_connectivity(from_edges(4, [(0, 1), (2, 3)])) == pytest.approx(0, abs=1e-12)
        assert algebraic_connectivity(k3) == pytest.approx(1.5)
        assert algebraic_connectivity(p3) == pytest.approx(1.0)

    @pytest.mark.parametrize("edges,n,count", [([(0, 1), (1, 2), (0, 2)], 3, 1), ([(0, 1), (2, 3)], 4, 2), ([], 4, 4)])
    def test_components(self, edges, n, count):
        assert connected_components_spectral(from_edges(n, edges)) == count

    def test_components_match_union_find(self, rng, make_graph):
        for _ in range(30):
            g = make_graph(rng, int(rng.integers(2, 25)), float(rng.uniform(0.02, 0.3)))
            assert connected_components_spectral(g) == union_find_components(g)

    def test_spectrum_range_and_trace(self, rng, make_graph):
        for _ in range(30):
            g = make_graph(rng, int(rng.integers(2, 30)), float(rng.uniform(0, 0.5)))
            lam = graph_spectrum(g)
            assert lam.min() >= -1e-9 and lam.max() <= 2 + 1e-9
            assert abs(lam.sum() - g.n) <= 1e-8 * g.n

    def test_diameter(self, k3, p3):
        b = diameter_bounds(k3)
        assert (b.upper, b.exact, b.distinct_eigenvalues) == (1, 1, 2)
        b = diameter_bounds(p3)
        assert (b.upper, b.exact) == (2, 2)
        star = from_edges(5, [(0, i) for i in range(1, 5)])
        b = diameter_bounds(star)
        assert b.lower <= b.exact == 2 <= b.upper

    def test_diameter_bounds_bracket(self):
        for seed in range(10):
            g = generate_random_geometric(25, 0.45, seed)
            if union_find_components(g) > 1:
                continue
            b = diameter_bounds(g)
            assert b.lower <= b.exact <= b.upper

    def test_diameter_disconnected(self):
        with pytest.raises(ValueError):
            diameter_bounds(from_edges(4, [(0, 1), (2, 3)]))

    def test_diffusion(self, edge2, k3):
        assert diffusion_distance(k3, 1, 1, 0.5) == 0
        assert diffusion_distance(k3, 0, 2, 0.7) == pytest.approx(diffusion_distance(k3, 2, 0, 0.7))
        assert diffusion_distance(edge2, 0, 1, 1.0) == pytest.approx(2 * np.exp(-4))

    def test_filters(self, k3, rng):
        x = rng.normal(size=3)
        lap = normalized_laplacian(k3)
        assert np.allclose(apply_spectral_filter(k3, x, make_filter("identity")), x)
        assert np.allclose(apply_spectral_filter(k3, x, lambda lam: lam), lap @ x)
        e0 = np.eye(3)[0]
        assert np.allclose(apply_spectral_filter(k3, e0, make_filter("gcn")), (2 * np.eye(3) - lap) @ e0)
        with pytest.raises(ValueError):
            make_filter("nope")


class TestFirstOrder:
    def test_flip_back_negates(self):
        g = generate_sbm(12, 2, 0.7, 0.1, seed=0)
        es = eig_full(normalized_laplacian(g))
        i, j = map(int, g.edges()[0])
        a = np.array(g.adjacency)
        a[i, j] = a[j, i] = 0
        h = Graph(a)
        # same linearization point, opposite flip direction
        up = first_order_eigen_change(es, g, i, j, 3)
        assert first_order_eigen_change(es, h.with_adjacency(g.adjacency), i, j, 3) == up
        dw_pos = first_order_eigen_change(es, g, i, j, 3, weight=0.5)
        dw_neg = first_order_eigen_change(es, g, i, j, 3, weight=-0.5)
        assert dw_pos == pytest.approx(-dw_neg)

    def test_magnitude_identity(self):
        g = generate_sbm(14, 2, 0.6, 0.2, seed=2)
        es = eig_full(normalized_laplacian(g))
        for i, j, k in [(0, 1, 1), (2, 9, 4), (3, 12, 10)]:
            assert abs(first_order_eigen_change(es, g, i, j, k)) == pytest.approx(eigen_change_magnitude(es, g, i, j, k))

    def test_fiedler_intra_removal(self):
        g = generate_sbm(16, 2, 0.8, 0.1, seed=3)
        es = eig_full(normalized_laplacian(g))
        lab = g.node_labels
        for i, j in g.edges():
            if lab[i] == lab[j]:
                break
        exact = oracle.exact_eigen_change(g, i, j, 1)
        pred = first_order_eigen_change(es, g, i, j, 1)
        assert abs(pred - exact) <= 0.5 * abs(exact) + 5e-2

    def test_inter_flips_move_low_eigenvalues_more(self):
        g = generate_sbm(30, 2, 0.8, 0.05, seed=1)
        es = eig_full(normalized_laplacian(g))
        lab = g.node_labels
        inter, intra = [], []
        for i in range(30):
            for j in range(i + 1, 30):
                (inter if lab[i] != lab[j] else intra).append(eigen_change_magnitude(es, g, i, j, 1))
        assert np.mean(inter) > np.mean(intra)

    def test_errors(self, k3):
        es = eig_full(normalized_laplacian(k3))
        with pytest.raises(ValueError):
            first_order_eigen_change(es, k3, 1, 1, 0)
        with pytest.raises(IndexError):
            first_order_eigen_change(es, k3, 0, 1, 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 60), st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_selective_matches_full_property(n, k, seed):
    g = generate_sbm(n, 2, 0.4, 0.1, seed) if seed % 2 else generate_random_geometric(n, 0.35, seed)
    lap = normalized_laplacian(g)
    full = eig_full(lap).values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        es = eig_selective(lap, SpectralSelection(k), seed=seed)
    if 2 * k >= n:
        assert np.allclose(es.values, full, atol=1e-8)
    else:
        assert np.allclose(es.values, np.r_[full[:k], full[-k:]], atol=1e-8)
