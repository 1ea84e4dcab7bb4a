import itertools
import math

import numpy as np
import pytest

from sawcomm import model, spectrum
from sawcomm.errors import GuardError, ParameterError
from sawcomm.model import SbmParams


def er_graph_measure(n, p):
    """All graphs on n vertices with their G(n, p) probabilities."""
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product([0, 1], repeat=len(pairs)):
        edges = {pairs[i] for i in range(len(pairs)) if bits[i]}
        prob = 1.0
        for b in bits:
            prob *= p if b else 1 - p
        yield edges, prob


class TestBiasedCharacter:
    def test_empty_shape_is_one(self):
        shape = spectrum.ShapeGraph.from_edges([])
        assert spectrum.biased_character(set(), shape, 0.3) == 1.0

    def test_single_edge_half(self):
        shape = spectrum.ShapeGraph.from_edges([(0, 1)])
        assert spectrum.biased_character({(0, 1)}, shape, 0.5) == pytest.approx(1.0)

    def test_orthonormality_exhaustive_n4(self):
        p = 0.3
        shapes = [
            spectrum.ShapeGraph.from_edges(c)
            for r in range(3)
            for c in itertools.combinations(itertools.combinations(range(4), 2), r)
        ]
        for a in shapes[:10]:
            for b in shapes[:10]:
                tot = sum(
                    prob
                    * spectrum.biased_character(g, a, p)
                    * spectrum.biased_character(g, b, p)
                    for g, prob in er_graph_measure(4, p)
                )
                expected = 1.0 if a.edges == b.edges else 0.0
                assert tot == pytest.approx(expected, abs=1e-10)


class TestMuHat:
    def params(self, n=30, d=3.0, eps=0.5, k=2):
        return SbmParams(n=n, d=d, eps=eps, k=k)

    def test_degree_one_vanishes_exhaustively(self):
        # every shape with <= 5 edges and a degree-1 vertex has mu_hat = 0
        params = self.params()
        pairs = list(itertools.combinations(range(5), 2))
        checked = 0
        for r in range(1, 6):
            for combo in itertools.combinations(pairs, r):
                shape = spectrum.ShapeGraph.from_edges(combo)
                if shape.has_degree_one_vertex():
                    assert abs(spectrum.mu_hat(shape, params)) <= 1e-12
                    checked += 1
        assert checked > 500

    def test_cycle_closed_form_matches_label_sum(self):
        for k in (2, 3, 4):
            params = self.params(k=k)
            for t in (3, 4, 5, 6):
                shape = spectrum.ShapeGraph.cycle(t)
                assert spectrum.mu_hat(shape, params) == pytest.approx(
                    spectrum.cycle_mu_hat(t, params), rel=1e-12
                )

    def test_triangle_against_monte_carlo(self):
        params = self.params(n=30, d=3.0, eps=0.5, k=2)
        shape = spectrum.ShapeGraph.from_edges([(0, 1), (1, 2), (0, 2)])
        exact = spectrum.mu_hat(shape, params)
        gen = np.random.default_rng(0)
        trials = 200_000
        vals = np.empty(trials)
        p = params.d / params.n
        scale = 1 / math.sqrt(p * (1 - p))
        for i in range(trials):
            z = gen.integers(2, size=3)
            agree = (z[[0, 1, 0]] == z[[1, 2, 2]]).astype(float)
            probs = p * (1 + params.eps * (agree - 0.5))
            x = (gen.random(3) < probs).astype(float)
            vals[i] = np.prod((x - p) * scale)
        se = vals.std() / math.sqrt(trials)
        assert abs(vals.mean() - exact) <= 3 * se

    def test_size_guard(self):
        params = self.params(k=6)
        shape = spectrum.ShapeGraph.cycle(12)
        with pytest.raises(GuardError):
            spectrum.mu_hat(shape, params)


class TestLowDegreeNorm:
    def test_max_deg_zero_is_one(self):
        assert spectrum.low_degree_norm_bruteforce(
            SbmParams(n=6, d=2.0, eps=0.4, k=2), 0
        ) == pytest.approx(1.0)

    def test_eps_zero_is_exactly_one(self):
        val = spectrum.low_degree_norm_bruteforce(
            SbmParams(n=6, d=2.0, eps=0.0, k=2), 3
        )
        assert val == pytest.approx(1.0, abs=1e-15)

    def test_matches_shape_decomposition_n7(self):
        # at degree <= 3 the only degree-one-free shapes are triangles
        params = SbmParams(n=7, d=2.5, eps=0.6, k=2)
        brute = spectrum.low_degree_norm_bruteforce(params, 3)
        tri = spectrum.ShapeGraph.from_edges([(0, 1), (1, 2), (0, 2)])
        decomp = 1.0 + math.comb(7, 3) * spectrum.mu_hat(tri, params) ** 2
        assert brute == pytest.approx(decomp, abs=1e-9)


class TestCycleSums:
    def test_ratio_approaches_threshold_rate(self):
        # exact per-length ratio is eps^2 d / k^2 times finite-size factors
        # (t-1)/t * (n-t+1)/n / (1 - d/n); it tends to eps^2 d / k^2.
        params = SbmParams(n=100_000, d=16.0, eps=1.0, k=2)
        rows = spectrum.cycle_sum_contribution(params, 60)
        base = params.eps**2 * params.d / params.k**2
        t = rows[-1]["t"]
        p = params.d / params.n
        exact = base * (t - 1) / t * (params.n - t + 1) / params.n / (1 - p)
        assert rows[-1]["ratio"] == pytest.approx(exact, rel=1e-9)
        assert rows[-1]["ratio"] == pytest.approx(base, rel=0.05)

    def test_below_threshold_sum_converges(self):
        params = SbmParams(n=5000, d=2.0, eps=1.0, k=2)  # eps^2 d = 2 < 4
        rows = spectrum.cycle_sum_contribution(params, 40)
        # geometric decay: tail increments shrink
        assert rows[-1]["ratio"] < 1.0
        tail = rows[-1]["cumulative"] - rows[-10]["cumulative"]
        assert tail <= rows[-10]["cumulative"] * 0.1

    def test_eps_zero_gives_zero(self):
        params = SbmParams(n=100, d=3.0, eps=0.0, k=2)
        rows = spectrum.cycle_sum_contribution(params, 6)
        assert rows[-1]["cumulative"] == 0.0

    def test_sign_change_brackets_threshold(self):
        # ratio crosses 1 as eps^2 d sweeps through k^2 (finite-size adjusted)
        k, d, n, t = 2, 9.0, 100_000, 40
        ratios = []
        for mult in (0.5, 0.9, 1.1, 1.5):
            params = SbmParams(n=n, d=d, eps=math.sqrt(mult * k**2 / d), k=k)
            ratios.append(spectrum.cycle_sum_contribution(params, t)[-1]["ratio"])
        assert ratios[0] < ratios[1] < 1.0 < ratios[2] < ratios[3]
