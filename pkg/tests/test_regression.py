import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mnr.errors import (
    DegenerateRegressors,
    NonPositiveDenominator,
    PerfectFit,
    SingularMoment,
)
from mnr.rdpg import ParamCurve, sample_rdpg, sample_scenario
from mnr.regression import (
    VarianceProfile,
    adjusted_estimator,
    embed_unknown_manifold,
    est_known_manifold,
    estimate_gamma_delta_method,
    estimate_regressors,
    f_statistic,
    f_test,
    naive_slope,
    ols_fit,
    pred_unknown_manifold,
    predict,
    predict_from_embedding,
    project_points,
    project_to_curve,
)
from mnr.spectral import ase_undirected, procrustes_align
from mnr.stats import RngStream, f_cdf

finite = st.floats(-100, 100, allow_nan=False)


class TestOls:
    def test_exact_line(self):
        t = np.linspace(0, 1, 11)
        fit = ols_fit(t, 2 + 5 * t)
        assert (fit.alpha_hat, fit.beta_hat) == pytest.approx((2, 5))
        assert np.allclose(fit.residuals, 0, atol=1e-12)

    def test_two_points(self):
        fit = ols_fit([0, 1], [0, 1])
        assert (fit.alpha_hat, fit.beta_hat) == pytest.approx((0, 1))

    def test_normal_equation_oracle(self, rng):
        t = rng.random(40)
        y = 1 - 3 * t + rng.standard_normal(40)
        n, st_, sy, stt, sty = len(t), t.sum(), y.sum(), t @ t, t @ y
        det = n * stt - st_**2
        alpha = (stt * sy - st_ * sty) / det
        beta = (n * sty - st_ * sy) / det
        fit = ols_fit(t, y)
        assert fit.alpha_hat == pytest.approx(alpha, abs=1e-10)
        assert fit.beta_hat == pytest.approx(beta, abs=1e-10)

    @given(
        t=arrays(np.float64, 12, elements=st.floats(-10, 10)),
        y=arrays(np.float64, 12, elements=finite),
    )
    @settings(max_examples=200, deadline=None)
    def test_normal_equations_hold(self, t, y):
        assume(np.sum((t - t.mean()) ** 2) > 1e-3)
        fit = ols_fit(t, y)
        assert np.array_equal(fit.fitted + fit.residuals, fit.fitted + (y - fit.fitted))
        assert np.allclose(fit.fitted + fit.residuals, y, atol=1e-9, rtol=0)
        scale = 1 + np.abs(y).max()
        assert abs(fit.residuals.sum()) < 1e-9 * scale * len(y)
        assert abs(fit.residuals @ t) < 1e-9 * scale * len(y) * (1 + np.abs(t).max())

    def test_degenerate(self):
        with pytest.raises(DegenerateRegressors):
            ols_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_constant_response(self):
        assert ols_fit([0.0, 0.3, 1.0], [4.0, 4.0, 4.0]).beta_hat == 0.0


class TestPredict:
    def test_values(self):
        fit = ols_fit([0.0, 1.0], [2.0, 7.0])
        assert predict(fit, 0.0) == pytest.approx(2.0)
        assert predict(fit, 1.0) == pytest.approx(7.0)

    def test_centered_form(self, rng):
        t, y = rng.random(30), rng.standard_normal(30)
        fit = ols_fit(t, y)
        for t_new in (-1.0, 0.2, 3.0):
            assert predict(fit, t_new) == pytest.approx(y.mean() + fit.beta_hat * (t_new - t.mean()), abs=1e-12)

    @given(
        a=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-2),
        b=st.floats(-10, 10),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=200, deadline=None)
    def test_affine_invariance(self, a, b, seed):
        g = np.random.default_rng(seed)
        t, y, t_new = g.random(15), g.standard_normal(15), g.random()
        base = predict(ols_fit(t, y), t_new)
        moved = predict(ols_fit(a * t + b, y), a * t_new + b)
        assert moved == pytest.approx(base, abs=1e-9)


class TestProjection:
    def test_on_curve(self, hw, diag):
        assert project_to_curve(hw, hw(0.3)) == pytest.approx(0.3, abs=1e-8)
        assert project_to_curve(diag, diag(0.77)) == pytest.approx(0.77, abs=1e-8)

    def test_tie_goes_to_smaller_parameter(self):
        # parabola (u, u^2), u = t - 1/2; the point (0, 0.59) is nearest to u = +-0.3
        para = ParamCurve(1.0, lambda t: np.column_stack([t - 0.5, (t - 0.5) ** 2]))
        assert project_to_curve(para, np.array([0.0, 0.59])) == pytest.approx(0.2, abs=1e-6)

    def test_offset_point_against_dense_grid(self, hw):
        normal = np.cross(hw.tangent(0.3), [1.0, 1.0, 1.0])
        point = hw(0.3) + 1e-3 * normal / np.linalg.norm(normal)
        t_hat = project_to_curve(hw, point)
        assert abs(t_hat - 0.3) < 5e-3
        grid = np.linspace(0, 1, 2_000_001)
        oracle = grid[np.argmin(np.sum((hw.eval(grid) - point) ** 2, axis=1))]
        assert t_hat == pytest.approx(oracle, abs=1e-6)

    def test_far_points_clip_to_ends(self, diag):
        t = project_points(diag, np.array([[-1.0] * 4, [3.0] * 4]))
        assert t == pytest.approx([0.0, 1.0], abs=1e-9)

    def test_vectorized_matches_scalar(self, hw, rng):
        pts = hw.eval(rng.random(15)) + 0.02 * rng.standard_normal((15, 3))
        vec = project_points(hw, pts)
        assert np.allclose(vec, [project_to_curve(hw, p) for p in pts])


class TestKnownManifold:
    def test_noiseless_pipeline(self, hw):
        sc, X = sample_scenario(hw, 300, 300, 2.0, 5.0, 0.1, RngStream(3))
        A = X @ X.T
        W, _ = procrustes_align(ase_undirected(A, 3), X)
        _, t_hat = estimate_regressors(A, W, 3, hw)
        assert np.max(np.abs(t_hat - sc.t)) < 1e-6
        a_sub, b_sub = est_known_manifold(A, W, 3, hw, sc.y)
        ref = ols_fit(sc.t, sc.y)
        assert a_sub == pytest.approx(ref.alpha_hat, abs=1e-6)
        assert b_sub == pytest.approx(ref.beta_hat, abs=1e-6)

    def test_constant_response_gives_zero_slope(self, hw):
        stream = RngStream(4)
        sc, X = sample_scenario(hw, 200, 200, 2.0, 5.0, 0.1, stream)
        A = sample_rdpg(X, stream)
        W, _ = procrustes_align(ase_undirected(A, 3), X)
        _, b = est_known_manifold(A, W, 3, hw, np.full(200, 3.0))
        assert b == 0.0

    @pytest.mark.slow
    def test_mse_shrinks_with_n(self, hw):
        mse = {}
        for n in (600, 2500):
            errs = []
            for rep in range(100):
                stream = RngStream(77, (n, rep))
                sc, X = sample_scenario(hw, n, n, 2.0, 5.0, 0.1, stream)
                A = sample_rdpg(X, stream)
                X_hat = ase_undirected(A, 3)
                W, _ = procrustes_align(X_hat, X)
                a, b = est_known_manifold(A, W, 3, hw, sc.y, X_hat=X_hat)
                errs.append((a - 2) ** 2 + (b - 5) ** 2)
            mse[n] = np.mean(errs)
        assert mse[2500] < mse[600]


class TestUnknownManifold:
    def test_noiseless_end_to_end(self, diag):
        sc, X = sample_scenario(diag, 400, 20, 2.0, 5.0, 1e-12, RngStream(9))
        y_pred = pred_unknown_manifold(X @ X.T, 1, 0.05, 25, sc.y, 22)
        assert y_pred == pytest.approx(2 + 5 * sc.t[22], abs=1e-3)

    def test_affine_invariance_of_prediction(self, diag):
        stream = RngStream(10)
        sc, X = sample_scenario(diag, 300, 20, 2.0, 5.0, 0.01, stream)
        emb = embed_unknown_manifold(sample_rdpg(X, stream), 1, 0.5, 21)
        base = predict_from_embedding(emb.z, sc.y, 20)
        moved = predict_from_embedding(-emb.z + 7.0, sc.y, 20)
        assert moved == pytest.approx(base, abs=1e-10)

    def test_graph_subset(self, diag):
        stream = RngStream(11)
        _, X = sample_scenario(diag, 300, 20, 2.0, 5.0, 0.01, stream)
        A = sample_rdpg(X, stream)
        emb = embed_unknown_manifold(A, 1, 0.8, 21, graph_nodes=30)
        assert emb.z.shape == (21,)
        with pytest.raises(ValueError):
            embed_unknown_manifold(A, 1, 0.8, 21, graph_nodes=20)

    def test_bad_indices(self, diag):
        A = np.zeros((30, 30))
        with pytest.raises(ValueError):
            pred_unknown_manifold(A, 1, 0.5, 10, np.zeros(5), 3)
        with pytest.raises(ValueError):
            pred_unknown_manifold(A, 1, 0.5, 10, np.zeros(2), 5)


class TestFTest:
    def test_null_model(self):
        y = np.array([1.0, 2.0, 4.0, 3.0])
        assert f_statistic(y, np.full(4, y.mean()), 4) == 0.0

    def test_hand_computed(self):
        assert f_statistic([0.0, 1.0, 2.0], [0.5, 1.0, 1.5], 3) == pytest.approx(1.0)

    def test_connectome_ratio(self):
        # SSR / SSE = 9.815 / 98 with s = 100 gives F = 9.815
        rng = np.random.default_rng(0)
        y_hat = rng.standard_normal(100)
        y_hat = (y_hat - y_hat.mean()) / np.linalg.norm(y_hat - y_hat.mean()) * np.sqrt(9.815)
        e = rng.standard_normal(100)
        e -= e.mean()
        e -= (e @ y_hat) / (y_hat @ y_hat) * y_hat
        e *= np.sqrt(98.0) / np.linalg.norm(e)
        y = y_hat + e
        assert f_statistic(y, y_hat, 100) == pytest.approx(9.815, abs=1e-9)
        res = f_test(y, y_hat, 100, 0.01)
        assert (res.df1, res.df2) == (1, 98)
        assert res.p_value == pytest.approx(0.0023, abs=2e-4)
        assert res.reject_at[0.01]

    def test_p_value_is_upper_tail(self, rng):
        t = rng.random(20)
        y = 1 + 0.3 * t + rng.standard_normal(20)
        fit = ols_fit(t, y)
        res = f_test(y, fit.fitted, 20, 0.05)
        assert res.p_value == pytest.approx(1 - f_cdf(res.f_stat, 1, 18), abs=1e-9)
        assert 0 <= res.p_value <= 1

    def test_zero_statistic(self):
        y = np.array([1.0, 2.0, 4.0, 3.0])
        assert f_test(y, np.full(4, y.mean()), 4).p_value == 1.0

    def test_perfect_fit(self):
        with pytest.raises(PerfectFit):
            f_statistic([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], 3)

    def test_invariant_under_affine_regressors(self, rng):
        t = rng.random(25)
        y = 2 + t + rng.standard_normal(25)
        f1 = f_statistic(y, ols_fit(t, y).fitted, 25)
        f2 = f_statistic(y, ols_fit(-3 * t + 11, y).fitted, 25)
        assert f1 == pytest.approx(f2, rel=1e-9)

    def test_small_s(self):
        with pytest.raises(ValueError):
            f_statistic([1.0, 2.0], [1.0, 2.0], 2)


class TestAdjusted:
    def test_zero_gamma_is_naive(self, rng):
        t, y = rng.random(50), rng.standard_normal(50)
        assert adjusted_estimator(t, y, VarianceProfile(np.zeros(50))) == naive_slope(t, y)

    def test_over_correction(self):
        with pytest.raises(NonPositiveDenominator):
            adjusted_estimator([0.1, 0.2], [1.0, 2.0], VarianceProfile(np.array([0.1, 0.1])))

    def test_errors_in_variables_oracle(self):
        gamma, beta, wins = 0.05, 5.0, 0
        for seed in range(100):
            g = np.random.default_rng(seed)
            t = g.random(2000)
            y = beta * t + 0.1 * g.standard_normal(2000)
            t_hat = t + np.sqrt(gamma) * g.standard_normal(2000)
            adj = adjusted_estimator(t_hat, y, VarianceProfile(np.full(2000, gamma)))
            wins += abs(adj - beta) < abs(naive_slope(t_hat, y) - beta)
        assert wins >= 80

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            VarianceProfile(np.array([0.1, -0.2]))


class TestGammaDeltaMethod:
    def test_identical_rows(self, hw):
        X = np.tile(hw(0.4), (50, 1))
        with pytest.raises(SingularMoment):
            estimate_gamma_delta_method(X, hw)

    def test_unit_speed_gradient(self, diag):
        # with ||psi'|| = 1 the gradient is the tangent itself: compare with an explicit formula
        t = np.random.default_rng(1).random(40)
        X = diag.eval(t) + 0.01 * np.random.default_rng(2).standard_normal((40, 4))
        prof = estimate_gamma_delta_method(X, diag, t)
        n = len(t)
        delta = X.T @ X / n
        g = np.full(4, 0.5)
        expected = []
        for i in range(n):
            p = np.clip(X @ X[i], 0, 1)
            mid = (X.T * (p * (1 - p))) @ X / n
            sigma = np.linalg.inv(delta) @ mid @ np.linalg.inv(delta)
            expected.append(g @ sigma @ g / n)
        assert np.allclose(prof.gamma, expected, rtol=1e-8, atol=0)

    @pytest.mark.slow
    def test_matches_monte_carlo_variance(self, hw):
        n, reps = 800, 100
        errs, totals = [], []
        for rep in range(reps):
            stream = RngStream(505, rep)
            sc, X = sample_scenario(hw, n, n, 0.0, 5.0, 0.1, stream)
            X_hat = ase_undirected(sample_rdpg(X, stream), 3)
            _, X_tilde = procrustes_align(X_hat, X)
            t_hat = project_points(hw, X_tilde)
            errs.append(t_hat - sc.t)
            totals.append(estimate_gamma_delta_method(X_tilde, hw, t_hat).total)
        mc_total = np.var(np.array(errs), axis=0, ddof=1).sum()
        est = float(np.mean(totals))
        assert 0.5 * mc_total <= est <= 2.0 * mc_total
