import math

import numpy as np
import pytest

from fgn_lan import experiments as ex
from fgn_lan import simulate
from fgn_lan.errors import DomainError, LocalizationError
from fgn_lan.fgn_model import Theta
from fgn_lan.likelihood import Observation
from fgn_lan.rate_matrix import SamplingScheme


def small_cfg(**kw):
    base = dict(theta0=Theta(0.7, 1.0), scheme=SamplingScheme(n_grid=(64, 128)), reps=200,
                chunk=64, master_seed=11)
    base.update(kw)
    return ex.CampaignConfig(**base)


class TestConfig:
    def test_min_reps(self):
        with pytest.raises(DomainError):
            small_cfg(reps=99)

    def test_localisation_checked_at_smallest_n(self):
        with pytest.raises(LocalizationError):
            small_cfg(theta0=Theta(0.95, 1.0), scheme=SamplingScheme(n_grid=(16, 64)),
                      u_list=((1.0, 0.0),))

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            small_cfg(rate_kind="diagonal")

    def test_chunks_cover_reps(self):
        cfg = small_cfg(reps=130, chunk=50)
        assert [len(c) for c in cfg.chunks()] == [50, 50, 30]


class TestJackknife:
    def test_variance_se(self):
        z = np.random.default_rng(0).standard_normal((20_000, 2))
        cov, se = ex.jackknife_cov(z)
        assert se[0, 0] == pytest.approx(math.sqrt(2 / 20_000), rel=0.2)
        assert se[0, 1] == pytest.approx(math.sqrt(1 / 20_000), rel=0.2)


class TestScoreCov:
    def test_against_j(self):
        rep = ex.mc_score_cov(small_cfg(reps=4000, chunk=1000), n=256)
        assert rep.within(3.0), rep.z_scores

    def test_j_depends_on_h(self):
        a = ex.mc_score_cov(small_cfg(theta0=Theta(0.5, 1.0), reps=2000, chunk=1000), n=128)
        b = ex.mc_score_cov(small_cfg(theta0=Theta(0.7, 1.0), reps=2000, chunk=1000), n=128)
        assert a.J[1, 1] != b.J[1, 1]
        assert abs(a.cov[1, 1] - b.cov[1, 1]) > 3 * math.hypot(a.se[1, 1], b.se[1, 1])

    def test_shares_paths_with_lan(self):
        cfg = small_cfg()
        sc = ex.mc_score_cov(cfg, n=128)
        lan = ex.mc_lan(cfg)
        M = ex.rate_matrix.finite_limit_matrix(cfg.rate(128), 1.0)
        np.testing.assert_allclose(np.column_stack([sc.A, sc.B]) @ M.T, lan.slices[-1].zeta)


class TestLan:
    def test_zero_u_gives_zero_remainder(self):
        rep = ex.mc_lan(small_cfg(u_list=((0.0, 0.0),)))
        for sl in rep.slices:
            assert np.all(sl.remainder == 0.0)

    def test_deterministic_across_workers(self):
        cfg = small_cfg()
        a = ex.mc_lan(cfg, workers=1)
        b = ex.mc_lan(cfg, workers=2)
        for sa, sb in zip(a.slices, b.slices):
            assert np.array_equal(sa.zeta, sb.zeta)
            assert np.array_equal(sa.remainder, sb.remainder)

    def test_report_shapes(self):
        rep = ex.mc_lan(small_cfg())
        assert rep.medians().shape == (2, 3)
        assert len(rep.decreasing()) == 3
        assert rep.cov_rel_error().shape == (2, 2)

    def test_exact_families_predicted_cov_equals_limit(self):
        rep = ex.mc_lan(small_cfg(rate_kind="shifted_pair"))
        np.testing.assert_allclose(rep.slices[-1].predicted_finite, rep.I_limit, rtol=1e-12)


class TestKawai:
    def test_unit_sigma_target(self):
        rep = ex.kawai_singular(small_cfg())
        np.testing.assert_array_equal(rep.target, [[2, 2], [2, 2]])
        assert rep.dets().shape == (2,)

    def test_limit_fisher_matches_display(self):
        I, lt = ex.limit_fisher(small_cfg(rate_kind="kawai", theta0=Theta(0.7, 2.0)))
        np.testing.assert_allclose(I, [[2, 1], [1, 0.5]], atol=1e-9)
        assert not lt.nondegenerate


@pytest.fixture(scope="module")
def paths():
    th = Theta(0.7, 1.3)
    return th, simulate.sample_batch(th, 300, 0.05, 2, range(6))


class TestMle:
    def test_batch_matches_exact(self, paths):
        th, X = paths
        b = ex.mle_batch(X, 0.05)
        assert b["converged"].all()
        for j in range(3):
            r = ex.mle_fit(Observation(X[:, j], 0.05))
            assert r.converged
            assert abs(r.h_hat - b["h_hat"][j]) < 2e-6
            assert r.sigma_hat == pytest.approx(b["sigma_hat"][j], rel=1e-4)

    def test_optimum_beats_grid(self, paths):
        th, X = paths
        obs = Observation(X[:, 0], 0.05)
        r = ex.mle_fit(obs)
        grid = np.linspace(0.01, 0.99, 64)
        vals = [ex._exact_profile(obs, H)[0] for H in grid]
        assert r.loglik_at_opt >= max(vals)
        assert 0.01 < r.h_hat < 0.99 and r.sigma_hat > 0

    def test_profile_is_loglik(self, paths):
        th, X = paths
        obs = Observation(X[:, 1], 0.05)
        r = ex.mle_fit(obs)
        ll = ex.likelihood.loglik(Theta(r.h_hat, r.sigma_hat), obs)
        assert r.loglik_at_opt == pytest.approx(ll, rel=1e-12)

    def test_scale_equivariance(self, paths):
        th, X = paths
        a = ex.mle_fit(Observation(X[:, 2], 0.05))
        b = ex.mle_fit(Observation(2 * X[:, 2], 0.05))
        assert b.h_hat == pytest.approx(a.h_hat, abs=1e-9)
        assert b.sigma_hat == pytest.approx(2 * a.sigma_hat, rel=1e-9)

    def test_small_n(self):
        with pytest.raises(DomainError):
            ex.mle_fit(Observation(np.ones(10)))

    def test_boundary_flag(self):
        x = np.tile([1.0, -1.0], 32)  # perfectly anti-persistent
        r = ex.mle_fit(Observation(x))
        assert r.boundary and r.h_hat < 0.02

    def test_profile_sigma_concentrates(self):
        th = Theta(0.7, 1.5)
        n = 1024
        X = simulate.sample_batch(th, n, 0.1, 4, range(200))
        s2 = [ex.profile_sigma2(Observation(X[:, j], 0.1), th.hurst) for j in range(200)]
        assert abs(np.mean(s2) - th.sigma**2) <= 3 * th.sigma**2 * math.sqrt(2 / n)

    @pytest.mark.slow
    def test_median_white_noise(self):
        th = Theta(0.5, 1.0)
        X = simulate.sample_batch(th, 4096, 1.0, 17, range(500))
        b = ex.mle_batch(X, 1.0)
        assert abs(np.median(b["h_hat"]) - 0.5) < 0.02


class TestRateSweep:
    def test_runs(self):
        rep = ex.rate_sweep(small_cfg(reps=100, chunk=100))
        assert [r.n for r in rep.rows] == [64, 128]
        assert rep.v_h > 0 and rep.v_sigma > 0
        assert np.isfinite(rep.slope_h())
        assert rep.sigma_rate_residuals().sum() == pytest.approx(0.0, abs=1e-12)
