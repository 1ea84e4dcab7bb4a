import numpy as np
import pytest

from sawcomm import projection as prj


def rng(seed=0):
    return np.random.default_rng(seed)


def qp_oracle_min_norm(sets_cvx, dim):
    """Independent QP oracle using cvxpy (tests only)."""
    import cvxpy as cp

    q = cp.Variable(dim)
    cons = [c(q) for c in sets_cvx]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(q)), cons)
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(q.value)


class TestPrimitives:
    def test_psd_keeps_psd_input(self):
        a = rng(1).normal(size=(8, 8))
        m = a @ a.T
        assert np.allclose(prj.project_psd(m), m, atol=1e-9)

    def test_psd_clips_simple_diagonal(self):
        out = prj.project_psd(np.diag([1.0, -1.0]))
        assert np.allclose(out, np.diag([1.0, 0.0]))

    def test_psd_matches_spectral_oracle(self):
        s = rng(2).normal(size=(20, 20))
        s = (s + s.T) / 2
        evals, evecs = np.linalg.eigh(s)
        oracle = (evecs * np.maximum(evals, 0)) @ evecs.T
        assert np.allclose(prj.project_psd(s), oracle, atol=1e-10)

    def test_opnorm_inside_ball_unchanged(self):
        s = rng(3).normal(size=(6, 6))
        s = (s + s.T) / 2
        r = np.abs(np.linalg.eigvalsh(s)).max() + 0.5
        assert np.allclose(prj.project_opnorm_ball(s, r), s)

    def test_opnorm_simple_clip(self):
        out = prj.project_opnorm_ball(np.diag([3.0, -3.0]), 1.0)
        assert np.allclose(out, np.diag([1.0, -1.0]))

    def test_opnorm_matches_spectral_oracle(self):
        s = rng(4).normal(size=(15, 15))
        s = (s + s.T) / 2
        out = prj.project_opnorm_ball(s, 0.5)
        assert np.abs(np.linalg.eigvalsh(out)).max() == pytest.approx(0.5, abs=1e-9)
        evals, evecs = np.linalg.eigh(s)
        oracle = (evecs * np.clip(evals, -0.5, 0.5)) @ evecs.T
        assert np.allclose(out, oracle, atol=1e-10)

    def test_row_shifted_simplex(self):
        shift = 0.2
        S = prj.RowShiftedSimplex(3, shift)
        x = rng(5).normal(size=(40, 3))
        y = S.project(x)
        p = y + shift
        assert (p >= -1e-12).all()
        assert np.allclose(p.sum(axis=1), 1.0)
        # projection of a feasible point is itself
        feas = rng(6).dirichlet(np.ones(3), size=10) - shift
        assert np.allclose(S.project(feas), feas, atol=1e-12)

    def test_halfspace(self):
        H = prj.Halfspace(np.array([1.0, 0.0]), 1.0)
        assert np.allclose(H.project(np.array([2.0, 3.0])), [2.0, 3.0])
        assert np.allclose(H.project(np.array([0.0, 3.0])), [1.0, 3.0])


class TestMinNorm:
    def test_single_halfspace_in_r2(self):
        res = prj.min_norm_in_intersection(
            [prj.Halfspace(np.array([1.0, 0.0]), 1.0)], (2,), tol=1e-10
        )
        assert res.converged
        assert np.allclose(res.point, [1.0, 0.0], atol=1e-8)

    def test_paper_style_2d_example_against_kkt(self):
        # C = {(a,b): a <= 1} with halfspace <P,Q> >= delta ||P|| ||Y||,
        # P = (delta*M, M), delta = 0.5, M = 10, Y = (1, 0).
        delta, M = 0.5, 10.0
        P = np.array([delta * M, M])
        Y = np.array([1.0, 0.0])
        bound = delta * np.linalg.norm(P) * np.linalg.norm(Y)

        class BoxA:
            def project(self, x):
                out = x.copy()
                out[0] = min(out[0], 1.0)
                return out

        res = prj.min_norm_in_intersection(
            [BoxA(), prj.Halfspace(P, bound)], (2,), tol=1e-10, max_iter=20000
        )
        # analytic KKT: unconstrained halfspace projection of 0 is
        # bound * P / ||P||^2, which already satisfies a <= 1.
        q_kkt = bound * P / (P @ P)
        assert q_kkt[0] <= 1.0
        assert np.allclose(res.point, q_kkt, atol=1e-6)

    def test_matches_cvxpy_oracle_small(self):
        import cvxpy as cp

        gen = rng(7)
        for trial in range(5):
            p = gen.normal(size=3)
            b = abs(gen.normal()) * 0.5 + 0.2
            ub = gen.normal(size=3) + 1.5
            sets = [prj.Halfspace(p, b)]

            class Box:
                def project(self, x):
                    return np.minimum(x, ub)

            sets.append(Box())
            oracle = qp_oracle_min_norm(
                [lambda q: p @ q >= b, lambda q: q <= ub], 3
            )
            res = prj.min_norm_in_intersection(sets, (3,), tol=1e-10, max_iter=50000)
            assert res.converged
            assert np.allclose(res.point, oracle, atol=1e-5)

    def test_correlation_preserving_guarantee(self):
        # Whenever Y in C and <P,Y> >= delta ||P|| ||Y||, the min-norm Q in
        # C cap {<P,.> >= delta ||P|| ||Y||} keeps <Q,Y> >= delta/2 |Q||Y| and
        # ||Q|| >= delta ||Y||.
        gen = rng(8)
        tol = 1e-8
        for trial in range(20):
            n = 8
            y = np.sign(gen.normal(size=n))
            Y = np.outer(y, y)
            noise = gen.normal(size=(n, n))
            noise = (noise + noise.T) / 2
            P = Y + noise * (np.linalg.norm(Y) / np.linalg.norm(noise)) * 1.5
            delta = float((P * Y).sum() / (np.linalg.norm(P) * np.linalg.norm(Y)))
            assert delta > 0.05
            bound = delta * np.linalg.norm(P) * np.linalg.norm(Y)
            sets = [
                prj.PsdCone(),
                prj.diag_equals(n, 1.0),
                prj.Halfspace(P, bound),
            ]
            res = prj.min_norm_in_intersection(
                sets, (n, n), tol=tol, max_iter=4000, scale=np.linalg.norm(Y)
            )
            Q = res.point
            slack = 10 * tol * np.linalg.norm(Y)
            assert (Q * Y).sum() >= (delta / 2) * np.linalg.norm(Q) * np.linalg.norm(Y) - slack
            assert np.linalg.norm(Q) >= delta * np.linalg.norm(Y) - slack

    def test_idempotence(self):
        gen = rng(9)
        n = 6
        P = gen.normal(size=(n, n))
        P = (P + P.T) / 2
        sets = [prj.PsdCone(), prj.diag_equals(n, 1.0), prj.Halfspace(P, 0.1)]
        res = prj.min_norm_in_intersection(sets, (n, n), tol=1e-9, max_iter=20000)
        assert res.converged
        again = prj.min_norm_in_intersection(
            sets, (n, n), tol=1e-9, max_iter=20000, start=res.point
        )
        assert np.linalg.norm(again.point - res.point) <= 1e-6

    def test_infeasible_flagged(self):
        sets = [
            prj.Halfspace(np.array([1.0, 0.0]), 1.0),
            prj.Halfspace(np.array([-1.0, 0.0]), 1.0),
        ]
        res = prj.min_norm_in_intersection(sets, (2,), tol=1e-9, max_iter=3000)
        assert not res.converged
        assert res.residual > 1e-3
