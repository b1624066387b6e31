import math

import numpy as np
import pytest

from qpefilter import (
    FilterConfig,
    filter_curve,
    kaiser_eps_max,
    kaiser_params,
    make_grid,
    make_window,
    probabilities_many,
    renormalization,
    renormalization_many,
)

WINDOWS = [("rect", None), ("sine", None), ("kaiser", 3.0)]


@pytest.fixture
def g6():
    return make_grid(6)


class TestConfig:
    def test_m_sets_cutoff(self, g6):
        assert FilterConfig(g6, m=2).y_c == 15
        assert FilterConfig(g6, y_c=15, m=2).y_c == 15

    def test_conflict(self, g6):
        with pytest.raises(ValueError, match="conflicts"):
            FilterConfig(g6, y_c=14, m=2)

    @pytest.mark.parametrize("kw", [{}, {"y_c": 0}, {"y_c": 64}, {"m": 0}, {"m": 6}])
    def test_invalid(self, g6, kw):
        with pytest.raises(ValueError):
            FilterConfig(g6, **kw)

    def test_omega_c(self, g6):
        assert FilterConfig(g6, 15).omega_c == pytest.approx(2 * math.pi * 15 / 64)


class TestRenormalization:
    def test_rect_exact_on_grid(self, g6):
        w, cfg = make_window("rect", g6), FilterConfig(g6, 15)
        for y in range(64):
            R, dR = renormalization(w, g6, cfg, g6.omega(y))
            assert R == pytest.approx(1.0 if y <= 15 else 0.0, abs=1e-12)
            assert dR <= 1e-12

    def test_sine_exact_half_grid(self, g6):
        w, cfg = make_window("sine", g6), FilterConfig(g6, 15)
        for y in range(63):
            if y + 1 == 16 or y == 63:
                continue
            assert renormalization(w, g6, cfg, g6.omega(y + 0.5))[1] <= 1e-12

    @pytest.mark.parametrize("kind,alpha", WINDOWS)
    def test_boundary_midpoint(self, g6, kind, alpha):
        cfg = FilterConfig(g6, 15)
        R, dR = renormalization(make_window(kind, g6, alpha), g6, cfg, g6.omega(15.5))
        assert 0 < R < 1
        assert dR == pytest.approx(R)

    @pytest.mark.parametrize("kind,alpha", WINDOWS)
    def test_partition(self, g6, kind, alpha):
        w, cfg = make_window(kind, g6, alpha), FilterConfig(g6, 15)
        E = np.random.default_rng(3).uniform(0, g6.period, 500)
        R, dR = renormalization_many(w, cfg, E)
        P = probabilities_many(w, g6, E)
        tail = P[:, 16:].sum(axis=1)
        np.testing.assert_allclose(R + tail, 1, atol=1e-12)
        np.testing.assert_allclose(dR, np.where(E <= cfg.omega_c, 1 - R, R), atol=1e-12)
        assert np.all(R <= 1 + 1e-12) and np.all(R >= 0)

    def test_energy_reduction(self, g6):
        w, cfg = make_window("sine", g6), FilterConfig(g6, 15)
        assert renormalization(w, g6, cfg, 0.4 + 3 * g6.period) == pytest.approx(
            renormalization(w, g6, cfg, 0.4), abs=1e-13)

    def test_grid_mismatch(self, g6):
        with pytest.raises(ValueError):
            renormalization(make_window("rect", g6), g6, FilterConfig(make_grid(5), 3), 0.1)


class TestCurve:
    def test_rect_gibbs_overshoot(self, g6):
        cfg = FilterConfig(g6, 15)
        curve = filter_curve(make_window("rect", g6), g6, cfg)
        assert curve.energies.size == 10_000
        assert curve.dR[curve.energies < cfg.omega_c].max() > 0.04

    def test_kaiser6_plateau_flat(self, g6):
        cfg = FilterConfig(g6, 15)
        delta = g6.omega(math.ceil(2 * 6))
        E = np.linspace(delta / 2, cfg.omega_c - delta + delta / 2, 2000)
        curve = filter_curve(make_window("kaiser", g6, 6.0), g6, cfg, E)
        assert curve.dR.max() < 1e-10

    @pytest.mark.parametrize("kind,alpha", WINDOWS)
    def test_zero_energy(self, g6, kind, alpha):
        curve = filter_curve(make_window(kind, g6, alpha), g6, FilterConfig(g6, 15), [0.0])
        assert curve.R[0] >= 0.5

    def test_threads_identical(self, g6):
        w, cfg = make_window("kaiser", g6, 3.0), FilterConfig(g6, 15)
        a = filter_curve(w, g6, cfg, threads=1)
        b = filter_curve(w, g6, cfg, threads=4)
        np.testing.assert_array_equal(a.R, b.R)
        np.testing.assert_array_equal(a.dR, b.dR)

    @pytest.mark.parametrize("bad", [[-0.1], [2 * math.pi]])
    def test_out_of_range(self, g6, bad):
        with pytest.raises(ValueError):
            filter_curve(make_window("rect", g6), g6, FilterConfig(g6, 15), bad)

    @pytest.mark.parametrize("kind,alpha", WINDOWS)
    def test_two_boundaries(self, g6, kind, alpha):
        # dR rises both just above E = 0 and just below E = 2 pi / T
        curve = filter_curve(make_window(kind, g6, alpha), g6, FilterConfig(g6, 15),
                             g6.omega(np.array([0.3, 8.3, 40.3, 63.7])))
        assert curve.dR[0] > curve.dR[1]
        assert curve.dR[3] > curve.dR[2]

    def test_window_ordering_far_region(self, g6):
        cfg = FilterConfig(g6, 15)
        E = g6.omega(np.array([8.3, 30.4, 40.6, 50.2]))
        dr = {k: renormalization_many(make_window(k, g6, a), cfg, E)[1] for k, a in WINDOWS}
        assert np.all(dr["rect"] > dr["sine"])
        assert np.all(dr["sine"] > dr["kaiser"])

    def test_eps_max_dominates_interior(self, g6):
        cfg = FilterConfig(g6, 15)
        w = make_window("kaiser", g6, 3.0)
        E = np.linspace(g6.omega(6.5), g6.omega(8.5), 200)
        assert renormalization_many(w, cfg, E)[1].max() <= kaiser_eps_max(3.0, g6)


class TestKaiserParams:
    def test_formula_values(self, g6):
        p = kaiser_params(3.0, g6, FilterConfig(g6, 15), 1e-7)
        assert p.delta == pytest.approx(2 * math.pi / 64 * 6)
        assert p.E_targ == pytest.approx(FilterConfig(g6, 15).omega_c - p.delta)
        assert p.N_estimate == pytest.approx(2 * math.pi / p.delta * 6)

    @pytest.mark.parametrize("n,E_targ,two_delta", [(6, 1.0589, 1.0232), (8, 1.4430, 0.2556), (9, 1.5069, 0.1279)])
    def test_measured_match_qetu_specs(self, n, E_targ, two_delta):
        g = make_grid(n)
        p = kaiser_params(3.0, g, FilterConfig(g, m=2), 1e-7)
        assert 2 * p.delta_meas == pytest.approx(two_delta, rel=0.2)
        assert p.E_targ_meas == pytest.approx(E_targ, rel=0.01)
        assert p.pass_lo < p.pass_hi < p.stop_lo < p.stop_hi

    def test_empty_target(self, g6):
        with pytest.raises(ValueError, match="empty"):
            kaiser_params(3.0, g6, FilterConfig(g6, 6), 1e-7)

    def test_bad_epsilon(self, g6):
        with pytest.raises(ValueError):
            kaiser_params(3.0, g6, FilterConfig(g6, 15), 0.0)
