import itertools
import math

import numpy as np
import pytest

from sawcomm import model, sawpoly as sp
from sawcomm.errors import GuardError, ParameterError


def rng(seed=0):
    return np.random.default_rng(seed)


def small_graph(seed=0, n=6, d=3.0, eps=0.8):
    g, _ = model.sample_mixed_membership(
        model.SbmParams(n=n, d=d, eps=eps, k=2), rng(seed)
    )
    return sp.centered_edge_weights(g, d)


def saw_oracle_permutations(weights, ell, i, j):
    """Independent enumerator: explicit permutations of interior vertices."""
    W = weights.scaled_dense()
    others = [v for v in range(weights.n) if v not in (i, j)]
    total = 0.0
    for interior in itertools.permutations(others, ell - 1):
        path = (i, *interior, j)
        prod = 1.0
        for a, b in zip(path, path[1:]):
            prod *= W[a, b]
        total += prod
    return total / weights.scale**ell


def star_oracle_permutations(weights, ell, i, j, k):
    """Independent enumerator over center + interleaved arm interiors."""
    W = weights.scaled_dense()
    n = weights.n
    others = [v for v in range(n) if v not in (i, j, k)]
    per_arm = ell - 1
    total = 0.0
    for center in others:
        rest = [v for v in others if v != center]
        for chosen in itertools.permutations(rest, 3 * per_arm):
            arms = [
                (t, *chosen[a * per_arm:(a + 1) * per_arm], center)
                for a, t in enumerate((i, j, k))
            ]
            prod = 1.0
            for arm in arms:
                for a, b in zip(arm, arm[1:]):
                    prod *= W[a, b]
            total += prod
    return total / weights.scale ** (3 * ell)


class TestBruteForce:
    def test_length_one_is_pair_weight(self):
        w = small_graph()
        assert sp.saw_matrix_bruteforce(w, 1, 0, 3) == pytest.approx(
            w.pair_weight(0, 3), rel=1e-12
        )

    def test_length_two_single_interior(self):
        g = model.Graph(3, np.array([[0, 1], [1, 2]]))
        w = sp.centered_edge_weights(g, 1.5)
        expected = w.pair_weight(0, 1) * w.pair_weight(1, 2)
        assert sp.saw_matrix_bruteforce(w, 2, 0, 2) == pytest.approx(expected, rel=1e-12)

    def test_matches_independent_enumerator(self):
        w = small_graph(1)
        for i, j in [(0, 1), (2, 5)]:
            assert sp.saw_matrix_bruteforce(w, 3, i, j) == pytest.approx(
                saw_oracle_permutations(w, 3, i, j), rel=1e-12
            )

    def test_guard(self):
        g, _ = model.sample_mixed_membership(
            model.SbmParams(n=300, d=3.0, eps=0.5, k=2), rng(2)
        )
        with pytest.raises(GuardError):
            sp.saw_matrix_bruteforce(sp.centered_edge_weights(g, 3.0), 5, 0, 1)

    def test_star_single_center(self):
        g = model.Graph(4, np.array([[0, 3], [1, 3], [2, 3]]))
        w = sp.centered_edge_weights(g, 2.0)
        expected = (
            w.pair_weight(0, 3) * w.pair_weight(1, 3) * w.pair_weight(2, 3)
        )
        assert sp.star_tensor_bruteforce(w, 1, 0, 1, 2) == pytest.approx(
            expected, rel=1e-12
        )

    def test_star_permutation_symmetry(self):
        w = small_graph(3, n=7)
        vals = {
            perm: sp.star_tensor_bruteforce(w, 2, *perm)
            for perm in itertools.permutations((0, 2, 5))
        }
        ref = vals[(0, 2, 5)]
        for v in vals.values():
            assert v == pytest.approx(ref, rel=1e-12)

    def test_star_matches_independent_enumerator(self):
        w = small_graph(4, n=7)
        assert sp.star_tensor_bruteforce(w, 2, 0, 1, 2) == pytest.approx(
            star_oracle_permutations(w, 2, 0, 1, 2), rel=1e-11
        )

    def test_star_repeated_terminal_zero(self):
        w = small_graph(5)
        assert sp.star_tensor_bruteforce(w, 1, 0, 0, 2) == 0.0


class TestColorfulEval:
    def test_length_one_identity(self):
        w = small_graph(6, n=5)
        coloring = np.array([0, 1, 2, 0, 1])
        P = sp.colorful_path_eval(w, 1, coloring, 3)
        norm = 1.0 / sp.rainbow_probability(2, 3)
        for i, j in itertools.combinations(range(5), 2):
            expected = norm * w.pair_weight(i, j) if coloring[i] != coloring[j] else 0.0
            assert P[i, j] == pytest.approx(expected, rel=1e-12)
            assert P[j, i] == pytest.approx(expected, rel=1e-12)

    def test_exhaustive_average_matches_bruteforce(self):
        # small exhaustive version of the unbiasedness identity
        w = small_graph(7, n=5)
        L, ell = 4, 2
        acc = np.zeros((5, 5))
        for colors in itertools.product(range(L), repeat=5):
            acc += sp.colorful_path_eval(w, ell, np.array(colors), L)
        acc /= L**5
        for i, j in itertools.combinations(range(5), 2):
            assert acc[i, j] == pytest.approx(
                sp.saw_matrix_bruteforce(w, ell, i, j), abs=1e-12
            )

    def test_unit_weights_count_paths(self):
        # complete graph with unit weights: expected entry = number of
        # 2-paths between i and j, which is n - 2 = 3 at n = 5
        n = 5
        W = np.ones((n, n))
        np.fill_diagonal(W, 0.0)
        weights = sp.EdgeWeights(n=n, kind="dense", scale=1.0, dense=W)
        L = 4
        acc = np.zeros((n, n))
        for colors in itertools.product(range(L), repeat=n):
            acc += sp.colorful_path_eval(weights, 2, np.array(colors), L)
        acc /= L**n
        offdiag = acc[~np.eye(n, dtype=bool)]
        assert np.allclose(offdiag, 3.0, atol=1e-10)

    def test_palette_guard(self):
        w = small_graph(8)
        with pytest.raises(ParameterError):
            sp.colorful_path_eval(w, 3, np.zeros(6, dtype=int), 3)


class TestEstimators:
    def test_fixed_seed_deterministic(self):
        w = small_graph(9, n=20, d=4.0)
        a = sp.saw_matrix_estimate(w, 3, palette=8, n_colorings=5, rng=rng(42))
        b = sp.saw_matrix_estimate(w, 3, palette=8, n_colorings=5, rng=rng(42))
        assert (a == b).all()

    def test_apply_matches_dense(self):
        w = small_graph(10, n=25, d=4.0)
        probes = rng(11).normal(size=(25, 3))
        P = sp.saw_matrix_estimate(w, 3, palette=8, n_colorings=4, rng=rng(12))
        FP = sp.saw_matrix_apply(w, 3, probes, palette=8, n_colorings=4, rng=rng(12))
        assert np.allclose(P @ probes, FP, atol=1e-10 * np.abs(P @ probes).max())

    def test_float32_close_to_float64(self):
        w = small_graph(13, n=30, d=4.0)
        a = sp.saw_matrix_estimate(w, 3, palette=8, n_colorings=4, rng=rng(14))
        b = sp.saw_matrix_estimate(
            w, 3, palette=8, n_colorings=4, rng=rng(14), dtype=np.float32
        )
        assert np.abs(a - b).max() <= 1e-4 * np.abs(a).max()

    def test_sbm_conditional_unbiasedness(self):
        # rescaled by (n / eps d)^ell, the conditional mean over graphs given
        # y equals |SAW| / n^... i.e. the estimator tracks y_i y_j
        n, d, eps, ell = 150, 5.0, 0.9, 3
        gen = rng(15)
        y = np.where(gen.random(n) < 0.5, -1.0, 1.0)
        reps = 60
        pairs = [(0, 1), (2, 3), (4, 5)]
        vals = {p: [] for p in pairs}
        count = sp.saw_path_count(n, ell)
        for _ in range(reps):
            probs = d / n * (1 + eps * np.outer(y, y))
            upper = np.triu(gen.random((n, n)) < probs, 1)
            r, c = np.nonzero(upper)
            g = model.Graph(n, np.stack([r, c], axis=1))
            w = sp.centered_edge_weights(g, d)
            P = sp.saw_matrix_estimate(w, ell, palette=8, n_colorings=4, rng=gen)
            scale = (n / (eps * d)) ** ell / count
            for p in pairs:
                vals[p].append(P[p] * scale)
        for (i, j), xs in vals.items():
            xs = np.array(xs)
            se = xs.std() / math.sqrt(reps)
            assert abs(xs.mean() - y[i] * y[j]) <= 3.5 * se + 0.05

    def test_zero_weights_zero_star(self):
        n = 7
        weights = sp.EdgeWeights(n=n, kind="dense", scale=1.0, dense=np.zeros((n, n)))
        T = sp.star_tensor_estimate(weights, 1, palette=6, n_colorings=3, rng=rng(16))
        assert (T == 0).all()

    def test_star_exhaustive_average_matches_bruteforce(self):
        w = small_graph(17, n=5, d=2.5)
        L = 4
        acc = np.zeros((5, 5, 5))
        for colors in itertools.product(range(L), repeat=5):
            acc += sp._colorful_star_eval(
                w, 1, np.array(colors), L, np.eye(5), np.float64
            )
        acc /= (L**5) * sp.rainbow_probability(4, L) * w.scale**3
        for i, j, k in itertools.permutations(range(5), 3):
            assert acc[i, j, k] == pytest.approx(
                sp.star_tensor_bruteforce(w, 1, i, j, k), abs=1e-12
            )

    def test_star_basis_contraction_consistent(self):
        w = small_graph(18, n=20, d=4.0)
        B = rng(19).normal(size=(20, 4))
        T = sp.star_tensor_estimate(w, 1, palette=8, n_colorings=3, rng=rng(20))
        TB = sp.star_tensor_estimate(
            w, 1, palette=8, n_colorings=3, rng=rng(20), basis=B
        )
        Tc = np.einsum("ijk,ip,jq,kr->pqr", T, B, B, B)
        assert np.allclose(Tc, TB, atol=1e-8 * max(1.0, np.abs(Tc).max()))


class TestBuildWTensor:
    def test_zero_shift_returns_star(self):
        star = rng(21).normal(size=(6, 6, 6))
        pair = rng(22).normal(size=(6, 6))
        out = sp.build_w_tensor(star, pair, k=3, alpha=0.0, shift=0.0)
        assert (out == star).all()

    def test_exact_ground_truth_identity(self):
        n, k, alpha = 40, 3, 1.0
        labels = model.LabelMatrix(model.sample_dirichlet(k, alpha, rng(23), size=n))
        cv = model.community_vectors(labels, alpha)
        star = np.einsum("si,sj,sl->ijl", cv.v, cv.v, cv.v)
        pair = cv.v.T @ cv.v
        out = sp.build_w_tensor(star, pair, k=k, alpha=alpha)
        target = np.einsum("si,sj,sl->ijl", cv.w, cv.w, cv.w)
        assert np.abs(out - target).max() <= 1e-9

    def test_symmetry(self):
        star = rng(24).normal(size=(5, 5, 5))
        star = (star + star.transpose(1, 0, 2) + star.transpose(2, 1, 0)
                + star.transpose(0, 2, 1) + star.transpose(1, 2, 0)
                + star.transpose(2, 0, 1)) / 6
        pair = rng(25).normal(size=(5, 5))
        pair = (pair + pair.T) / 2
        out = sp.build_w_tensor(star, pair, k=2, alpha=0.5)
        for perm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)]:
            assert np.abs(out - out.transpose(perm)).max() <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            sp.build_w_tensor(np.zeros((3, 3, 3)), np.zeros((4, 4)), 2, 0.0)


class TestDefaults:
    def test_default_ell_clamps(self):
        assert sp.default_ell(1500, 1.0, 4.0) == 6
        assert sp.default_ell(100, 0.2, 3.0) == 3
        assert sp.default_ell(10**9, 1.0, 1.4) == 8

    def test_rainbow_probability(self):
        assert sp.rainbow_probability(3, 3) == pytest.approx(6 / 27)
        assert sp.rainbow_probability(4, 3) == 0.0

    def test_default_colorings(self):
        p = sp.rainbow_probability(4, 8)
        assert sp.default_n_colorings(4, 8) == math.ceil(25 / p)

    def test_counts(self):
        assert sp.saw_path_count(10, 1) == 1
        assert sp.saw_path_count(10, 3) == 8 * 7
        assert sp.star_count(10, 1) == 7
        assert sp.star_count(10, 2) == 7 * 6 * 5 * 4
