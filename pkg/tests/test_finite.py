import numpy as np
import pytest

from collapse_lab.finite import (
    DesignOps,
    IterationConfig,
    conditional_interpolator_risk,
    conditional_ridge_risk,
    det_equiv_check,
    empirical_risk,
    interpolator_path,
    ridge_path,
    variance_monotonicity_factor,
)
from collapse_lab.spectra import (
    AR1,
    DesignSample,
    Isotropic,
    Role,
    build_covariance,
    draw_design,
    substream,
)

# ---------------------------------------------------------------------------
# Oracle: conditional mean and covariance of the iterate by direct dense
# recursion, written independently of the production closed forms.  With
# A = (X^T X + n lam I)^{-1} X^T (or pinv(X)) and S = A X:
#   E_0 = S beta,            E_t = S (w beta + (1-w) E_{t-1})
#   C_0 = sigma2 A A^T,      C_t = (1-w)^2 S C_{t-1} S^T
#                                   + sigma2 (w^2 + (1-w)^2) A A^T
# bias = (E_t - beta)^T Sigma (E_t - beta), variance = tr(Sigma C_t).
# ---------------------------------------------------------------------------


def dense_conditional_risk(X, sigma, beta, w, t, lam, sigma2):
    n, p = X.shape
    if lam is None:
        A = np.linalg.pinv(X)
    else:
        A = np.linalg.solve(X.T @ X + n * lam * np.eye(p), X.T)
    S = A @ X
    noise_cov = sigma2 * (w * w + (1.0 - w) ** 2) * (A @ A.T)
    mean = S @ beta
    cov = sigma2 * (A @ A.T)
    for _ in range(t):
        mean = S @ (w * beta + (1.0 - w) * mean)
        cov = (1.0 - w) ** 2 * (S @ cov @ S.T) + noise_cov
    diff = mean - beta
    return float(diff @ sigma @ diff), float(np.trace(sigma @ cov))


@pytest.fixture(scope="module")
def small_problem():
    n, p = 12, 18
    design = draw_design(AR1(rho=0.5), n, p, seed=11, replicate=0)
    sigma = build_covariance(AR1(rho=0.5), p).sigma
    beta = substream(11, Role.SIGNAL, 0, 0).standard_normal(p) / np.sqrt(p)
    return design, sigma, beta


class TestClosedFormsAgainstDenseOracle:
    @pytest.mark.parametrize("w", [0.3, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("t", [0, 1, 3, 6])
    @pytest.mark.parametrize("lam", [0.1, 1.0])
    def test_ridge(self, small_problem, w, t, lam):
        design, sigma, beta = small_problem
        cfg = IterationConfig(w=w, t=t, lam=lam, sigma2=1.7)
        got = conditional_ridge_risk(design, sigma, beta, cfg)
        bias, var = dense_conditional_risk(design.X, sigma, beta, w, t, lam, 1.7)
        assert got.bias == pytest.approx(bias, rel=1e-9, abs=1e-13)
        assert got.variance == pytest.approx(var, rel=1e-9)
        assert got.total == pytest.approx(bias + var, rel=1e-9)

    @pytest.mark.parametrize("w", [0.3, 0.618, 1.0])
    @pytest.mark.parametrize("t", [0, 1, 4])
    def test_interpolator(self, small_problem, w, t):
        design, sigma, beta = small_problem
        cfg = IterationConfig(w=w, t=t, lam=None, sigma2=0.8)
        got = conditional_interpolator_risk(design, sigma, beta, cfg)
        bias, var = dense_conditional_risk(design.X, sigma, beta, w, t, None, 0.8)
        assert got.bias == pytest.approx(bias, rel=1e-9, abs=1e-12)
        assert got.variance == pytest.approx(var, rel=1e-9)


class TestRidgeRiskStructure:
    def test_variance_constant_in_t_at_pure_real(self, small_problem):
        design, sigma, beta = small_problem
        risks = [
            conditional_ridge_risk(
                design, sigma, beta, IterationConfig(w=1.0, t=t, lam=0.5)
            ).variance
            for t in [0, 1, 5, 50]
        ]
        assert np.allclose(risks, risks[0], rtol=1e-13)

    def test_long_run_variance_trace_identity(self, small_problem):
        # t -> infinity limit: a difference of two resolvent traces; the
        # nullspace of X^T X cancels between them, so full solves are fine.
        design, sigma, beta = small_problem
        n, p = design.n, design.p
        M = design.X.T @ design.X
        for w, lam in [(0.3, 0.7), (0.7, 0.2)]:
            cfg = IterationConfig(w=w, t=200, lam=lam, sigma2=1.0)
            got = conditional_ridge_risk(design, sigma, beta, cfg).variance
            a = n * lam / w
            b = n * lam / (2.0 - w)
            tr_a = np.trace(np.linalg.solve(M + a * np.eye(p), sigma))
            tr_b = np.trace(np.linalg.solve(M + b * np.eye(p), sigma))
            mixed = w * w + (1.0 - w) ** 2
            expect = mixed / (2.0 * (1.0 - w)) * (tr_a / w - tr_b / (2.0 - w))
            assert got == pytest.approx(expect, rel=1e-8)

    def test_small_lam_matches_interpolator(self, small_problem):
        design, sigma, beta = small_problem
        r = conditional_ridge_risk(
            design, sigma, beta, IterationConfig(w=0.6, t=3, lam=1e-8)
        )
        i = conditional_interpolator_risk(
            design, sigma, beta, IterationConfig(w=0.6, t=3, lam=None)
        )
        assert r.total == pytest.approx(i.total, rel=1e-4)

    def test_rejects_missing_lam(self, small_problem):
        design, sigma, beta = small_problem
        with pytest.raises(ValueError):
            conditional_ridge_risk(design, sigma, beta, IterationConfig(w=0.5, t=1))

    def test_rejects_zero_w(self, small_problem):
        design, sigma, beta = small_problem
        with pytest.raises(ValueError):
            conditional_ridge_risk(
                design, sigma, beta, IterationConfig(w=0.0, t=1, lam=1.0)
            )


class TestInterpolatorRiskStructure:
    def test_bias_independent_of_w_and_t(self, small_problem):
        design, sigma, beta = small_problem
        ref = conditional_interpolator_risk(
            design, sigma, beta, IterationConfig(w=0.5, t=0)
        ).bias
        for w, t in [(0.3, 2), (0.9, 7), (1.0, 0)]:
            got = conditional_interpolator_risk(
                design, sigma, beta, IterationConfig(w=w, t=t)
            ).bias
            assert got == ref  # bit-identical: same projection either way

    def test_needs_overparametrization(self):
        design = draw_design(Isotropic(), 20, 10, seed=0)
        sigma = np.eye(10)
        with pytest.raises(ValueError):
            conditional_interpolator_risk(
                design, sigma, np.ones(10), IterationConfig(w=0.5, t=1)
            )

    def test_rejects_penalty(self, small_problem):
        design, sigma, beta = small_problem
        with pytest.raises(ValueError):
            conditional_interpolator_risk(
                design, sigma, beta, IterationConfig(w=0.5, t=1, lam=1.0)
            )


class TestVarianceFactor:
    def test_one_step_two_thirds(self):
        # w = 2/3: (w^2 + (1-w)^2) + (1-w)^2 = 5/9 + 1/9 = 2/3
        f = variance_monotonicity_factor(2.0 / 3.0, 1)
        assert f[0] == 1.0
        assert f[1] == pytest.approx(2.0 / 3.0, rel=1e-15)

    @pytest.mark.parametrize("w", [0.05, 0.2, 0.3])
    def test_increasing_below_one_third(self, w):
        f = variance_monotonicity_factor(w, 8)
        assert np.all(np.diff(f) > 0)

    @pytest.mark.parametrize("w", [0.4, 0.618, 0.9])
    def test_decreasing_above_one_third(self, w):
        f = variance_monotonicity_factor(w, 8)
        assert np.all(np.diff(f) < 0)

    @pytest.mark.parametrize("w", [1.0 / 3.0, 1.0])
    def test_flat_at_boundaries(self, w):
        f = variance_monotonicity_factor(w, 8)
        assert np.allclose(f, 1.0, rtol=1e-14)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            variance_monotonicity_factor(1.5, 3)
        with pytest.raises(ValueError):
            variance_monotonicity_factor(0.5, -1)


class TestPaths:
    def test_interpolation_of_final_labels(self, small_problem):
        # full row rank makes X bhat_t reproduce the final mixed labels exactly
        design, sigma, beta = small_problem
        cfg = IterationConfig(w=0.55, t=3, lam=None, sigma2=1.0, seed=11, replicate=2)
        bhat = interpolator_path(design, beta, cfg)
        prev = interpolator_path(
            design, beta, IterationConfig(w=0.55, t=2, lam=None, sigma2=1.0, seed=11, replicate=2)
        )
        scale = 1.0
        eps_real = substream(11, Role.NOISE_REAL, 2, 3).normal(0.0, scale, design.n)
        eps_synth = substream(11, Role.NOISE_SYNTH, 2, 3).normal(0.0, scale, design.n)
        y_mix = 0.55 * (design.X @ beta + eps_real) + 0.45 * (design.X @ prev + eps_synth)
        assert np.linalg.norm(design.X @ bhat - y_mix) < 1e-9 * np.linalg.norm(y_mix)

    def test_noiseless_interpolator_recovers_projection(self, small_problem):
        design, sigma, beta = small_problem
        cfg = IterationConfig(w=0.5, t=4, lam=None, sigma2=0.0)
        bhat = interpolator_path(design, beta, cfg)
        assert np.linalg.norm(design.X @ bhat - design.X @ beta) < 1e-10

    def test_tiny_lam_tracks_interpolator(self, small_problem):
        design, sigma, beta = small_problem
        kw = dict(w=0.5, t=2, sigma2=1.0, seed=3, replicate=1)
        br = ridge_path(design, beta, IterationConfig(lam=1e-8, **kw))
        bi = interpolator_path(design, beta, IterationConfig(lam=None, **kw))
        assert np.linalg.norm(br - bi) < 1e-4 * np.linalg.norm(bi)

    def test_noise_stream_bookkeeping(self, small_problem):
        design, sigma, beta = small_problem
        log = []
        cfg = IterationConfig(w=0.5, t=3, lam=1.0, seed=0, replicate=7)
        ridge_path(design, beta, cfg, key_log=log)
        assert len(log) == len(set(log))  # every draw from its own stream
        real = sorted(s for role, rep, s in log if role == int(Role.NOISE_REAL))
        synth = sorted(s for role, rep, s in log if role == int(Role.NOISE_SYNTH))
        assert real == [0, 1, 2, 3]
        assert synth == [1, 2, 3]
        assert all(rep == 7 for _, rep, _ in log)

    def test_path_determinism(self, small_problem):
        design, sigma, beta = small_problem
        cfg = IterationConfig(w=0.4, t=2, lam=0.3, seed=5, replicate=1)
        a = ridge_path(design, beta, cfg)
        b = ridge_path(design, beta, cfg)
        assert np.array_equal(a, b)

    def test_ridge_path_requires_lam(self, small_problem):
        design, sigma, beta = small_problem
        with pytest.raises(ValueError):
            ridge_path(design, beta, IterationConfig(w=0.5, t=1))

    def test_interpolator_path_rejects_lam(self, small_problem):
        design, sigma, beta = small_problem
        with pytest.raises(ValueError):
            interpolator_path(design, beta, IterationConfig(w=0.5, t=1, lam=1.0))

    def test_rank_collapse_warns(self):
        n, p = 10, 12
        base = substream(0, Role.DESIGN, 0).standard_normal((3, p))
        X = np.vstack([base, np.zeros((n - 3, p))])
        design = DesignSample(
            X=X, sqrt_sigma=np.eye(p), n=n, p=p,
            entry_dist="gaussian", seed=0, replicate=0,
        )
        with pytest.warns(RuntimeWarning):
            interpolator_path(design, np.ones(p), IterationConfig(w=0.5, t=0))


class TestIterationConfigValidation:
    def test_rejects_w_out_of_range(self):
        with pytest.raises(ValueError):
            IterationConfig(w=1.2, t=1)

    def test_rejects_negative_t(self):
        with pytest.raises(ValueError):
            IterationConfig(w=0.5, t=-1)

    def test_rejects_nonpositive_lam(self):
        with pytest.raises(ValueError):
            IterationConfig(w=0.5, t=1, lam=0.0)

    def test_rejects_negative_sigma2(self):
        with pytest.raises(ValueError):
            IterationConfig(w=0.5, t=1, sigma2=-1.0)

    def test_rejects_unknown_noise(self):
        with pytest.raises(ValueError):
            IterationConfig(w=0.5, t=1, noise_dist="uniform")


class TestEmpiricalRisk:
    def test_exact_recovery(self):
        beta = np.array([1.0, -2.0, 3.0])
        est = np.tile(beta, (5, 1))
        mean, se = empirical_risk(est, beta, np.eye(3))
        assert mean == 0.0
        assert se == 0.0

    def test_alternating_unit_errors(self):
        beta = np.zeros(3)
        est = np.zeros((4, 3))
        est[:, 0] = [1.0, -1.0, 1.0, -1.0]
        mean, se = empirical_risk(est, beta, np.eye(3))
        assert mean == pytest.approx(1.0)
        assert se == pytest.approx(0.0)

    def test_single_replicate_has_no_se(self):
        mean, se = empirical_risk(np.ones((1, 2)), np.zeros(2), np.eye(2))
        assert mean == pytest.approx(2.0)
        assert np.isnan(se)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            empirical_risk(np.ones(3), np.zeros(3), np.eye(3))


class TestDeterministicEquivalent:
    def test_vector_matches_rank_one_matrix(self):
        n, p = 60, 90
        design = draw_design(AR1(rho=0.5), n, p, seed=2)
        cov = build_covariance(AR1(rho=0.5), p)
        v = substream(2, Role.SIGNAL, 0, 0).standard_normal(p)
        lhs_v, rhs_v, _ = det_equiv_check(v, design, cov, -1.0)
        lhs_m, rhs_m, _ = det_equiv_check(np.outer(v, v), design, cov, -1.0)
        assert lhs_v == pytest.approx(lhs_m, rel=1e-10)
        assert rhs_v == pytest.approx(rhs_m, rel=1e-10)

    def test_isotropic_scalar_form(self):
        # Sigma = I collapses the right side to ||v||^2 / ((1+m)^2 - gamma m^2)
        n, p = 100, 200
        design = draw_design(Isotropic(), n, p, seed=4)
        cov = build_covariance(Isotropic(), p)
        v = np.ones(p)
        _, rhs, gap = det_equiv_check(v, design, cov, -1.0)
        gamma = p / n
        b = 1.0 - 1.0 - gamma  # alpha=1, z=-1
        m = 2.0 / (np.sqrt(b * b + 4.0) - b)
        expect = p / ((1.0 + m) ** 2 - gamma * m * m)
        assert rhs == pytest.approx(expect, rel=1e-10)
        assert gap < 0.5

    def test_gap_shrinks_with_n(self):
        med = []
        for n in (100, 400):
            p = 2 * n
            cov = build_covariance(AR1(rho=0.5), p)
            v = np.ones(p) / np.sqrt(p)
            gaps = []
            for seed in range(5):
                design = draw_design(AR1(rho=0.5), n, p, seed=seed)
                gaps.append(det_equiv_check(v, design, cov, -1.0)[2])
            med.append(np.median(gaps))
        assert med[1] < med[0]

    def test_rejects_nonnegative_z(self):
        design = draw_design(Isotropic(), 10, 20, seed=0)
        cov = build_covariance(Isotropic(), 20)
        with pytest.raises(ValueError):
            det_equiv_check(np.ones(20), design, cov, 0.5)


class TestDesignOps:
    def test_multi_penalty_matches_single(self, small_problem):
        design, _, _ = small_problem
        ops = DesignOps(design.X)
        Y = substream(1, 0, 0).standard_normal((design.n, 3))
        lams = np.array([0.1, 1.0, 10.0])
        multi = ops.apply_fit_multi(Y, lams)
        for j, lam in enumerate(lams):
            single = ops.apply_fit(Y[:, j], float(lam))
            assert np.allclose(multi[:, j], single, rtol=1e-13)

    def test_pinv_gains(self, small_problem):
        design, _, _ = small_problem
        ops = DesignOps(design.X)
        assert np.allclose(ops.gains(None) * ops.s, 1.0)

    def test_rank_full_for_generic_design(self, small_problem):
        design, _, _ = small_problem
        assert DesignOps(design.X).rank == min(design.n, design.p)
