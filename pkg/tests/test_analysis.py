import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walker_sg import analysis, geometry, link, montecarlo
from walker_sg.analysis import CoverageQuery, QuadratureGrid
from walker_sg.geometry import ConstellationSpec, UserGeometry
from walker_sg.link import LinkBudget
from walker_sg.montecarlo import EnsembleConfig

KM = 1e3
LAT15 = math.radians(15)
G64 = QuadratureGrid(64, 64)


@pytest.fixture
def fig4():
    spec = ConstellationSpec(30, 75, math.radians(33), 6921 * KM, 6370 * KM)
    return spec, LinkBudget.from_db(20.0, 24.0, 0.0, 946 * KM)


@pytest.fixture
def fig5():
    spec = ConstellationSpec(25, 30, math.radians(33), 6921 * KM, 6370 * KM)
    noise = link.noise_from_temperature(300.0, 7.0, 10e6)
    return spec, LinkBudget.from_db(20.0, 30.0, 0.0, 946 * KM, noise_power=noise)


class TestGrid:
    def test_nodes_are_cell_midpoints(self, small_spec):
        th, om = QuadratureGrid(4, 2).nodes(small_spec)
        assert len(th) == 8
        np.testing.assert_allclose(np.unique(th), small_spec.theta_interval * (np.arange(4) + 0.5) / 4)
        np.testing.assert_allclose(np.unique(om), small_spec.omega_interval * (np.arange(2) + 0.5) / 2)

    def test_refined(self):
        assert QuadratureGrid(8, 16).refined() == QuadratureGrid(16, 32)

    def test_invalid(self):
        with pytest.raises(ValueError):
            QuadratureGrid(0, 4)
        with pytest.raises(ValueError):
            CoverageQuery(0.0)

    def test_converge_stops_when_stable(self):
        res = analysis.converge(lambda g: 1.0 / g.n_theta, QuadratureGrid(4, 4), tol=0.05)
        assert res.converged and res.grid == QuadratureGrid(32, 32)

    def test_converge_reports_failure(self):
        res = analysis.converge(lambda g: float(g.n_theta), QuadratureGrid(4, 4), max_size=32)
        assert not res.converged and res.grid == QuadratureGrid(32, 32)


class TestDistanceCcdf:
    def test_edges(self, fig3_spec):
        user = UserGeometry.typical(LAT15, fig3_spec)
        vals = analysis.distance_ccdf(fig3_spec, user, [0.0, 551 * KM, 551 * KM + 1.0], G64)
        assert vals[0] == vals[1] == 1.0
        assert vals[2] == 1.0

    def test_beyond_critical_distance(self, fig3_spec):
        # the dense constellation always has a satellite closer than 775 km
        user = UserGeometry.typical(LAT15, fig3_spec)
        assert analysis.distance_ccdf(fig3_spec, user, 800 * KM, QuadratureGrid(256, 256)) == 0.0

    def test_horizon_reports_no_visibility(self):
        spec = ConstellationSpec(3, 4, math.radians(33), 6921 * KM, 6370 * KM)
        user = UserGeometry.typical(LAT15, spec)
        d = analysis.nearest_distances(spec, user, G64)
        holes = float(np.mean(~np.isfinite(d)))
        assert 0 < holes < 1
        above = analysis.distance_ccdf(spec, user, [spec.max_visible_distance, 1e8], G64)
        np.testing.assert_allclose(above, holes)

    def test_negative_distance(self, small_spec):
        with pytest.raises(ValueError):
            analysis.distance_ccdf(small_spec, UserGeometry.typical(0.0, small_spec), -1.0, G64)

    @settings(max_examples=25)
    @given(
        st.integers(1, 12),
        st.integers(1, 12),
        st.floats(0.1, 3.0),
        st.floats(-1.5, 1.5),
        st.lists(st.floats(0, 3000 * KM), min_size=2, max_size=30),
    )
    def test_monotone_and_bounded(self, n_o, n_s, phi, lat, ds):
        spec = ConstellationSpec(n_o, n_s, phi, 6921 * KM, 6370 * KM)
        ds = np.sort(ds)
        vals = analysis.distance_ccdf(spec, UserGeometry.typical(lat, spec), ds, QuadratureGrid(16, 16))
        assert np.all((vals >= 0) & (vals <= 1))
        assert np.all(np.diff(vals) <= 0)

    @pytest.mark.parametrize("lat_deg", [5, 15, 40])
    def test_latitude_symmetry(self, small_spec, lat_deg):
        d = np.linspace(small_spec.min_distance, small_spec.max_visible_distance, 60)
        grid = QuadratureGrid(128, 128)
        north = analysis.distance_ccdf(small_spec, UserGeometry.typical(math.radians(lat_deg), small_spec), d, grid)
        south = analysis.distance_ccdf(small_spec, UserGeometry.typical(-math.radians(lat_deg), small_spec), d, grid)
        assert np.max(np.abs(north - south)) < 2e-3

    @pytest.mark.parametrize("lon", [0.3, -2.0, 3.0])
    def test_longitude_invariance(self, small_spec, lon):
        d = np.linspace(small_spec.min_distance, small_spec.max_visible_distance, 60)
        grid = QuadratureGrid(128, 128)
        base = analysis.distance_ccdf(small_spec, UserGeometry(LAT15, small_spec.earth_radius), d, grid)
        moved = analysis.distance_ccdf(small_spec, UserGeometry(LAT15, small_spec.earth_radius, lon), d, grid)
        assert np.max(np.abs(base - moved)) < 2e-3

    def test_refinement_changes_less_than_tolerance(self, small_spec):
        user = UserGeometry.typical(LAT15, small_spec)
        d = np.linspace(small_spec.min_distance, small_spec.max_visible_distance, 40)
        res = analysis.converge(lambda g: analysis.distance_ccdf(small_spec, user, d, g))
        assert res.converged and res.delta < analysis.CONVERGENCE_TOL

    def test_thread_count_bit_stable(self, small_spec):
        user = UserGeometry.typical(LAT15, small_spec)
        d = np.linspace(small_spec.min_distance, small_spec.max_visible_distance, 40)
        runs = [analysis.distance_ccdf(small_spec, user, d, QuadratureGrid(256, 256), threads=n).tobytes() for n in (1, 4, 8)]
        assert len(set(runs)) == 1


class TestNearestMean:
    def test_matches_monte_carlo(self, small_spec):
        user = UserGeometry.typical(LAT15, small_spec)
        exact = analysis.expected_nearest_distance(small_spec, user, QuadratureGrid(256, 256))
        assert exact.no_visibility == 0.0
        samples = montecarlo.empirical_nearest_distances(small_spec, user, EnsembleConfig(50_000, 3))
        est = montecarlo.normal_mean(samples, 3.29)
        assert est.contains(exact.mean)

    def test_reports_holes(self):
        spec = ConstellationSpec(2, 3, math.radians(33), 6921 * KM, 6370 * KM)
        res = analysis.expected_nearest_distance(spec, UserGeometry.typical(LAT15, spec), G64)
        assert res.no_visibility > 0


class TestCriticalDistance:
    def test_no_coverage_sentinel(self):
        spec = ConstellationSpec(1, 1, 1e-6, 6921 * KM, 6370 * KM)
        dc = analysis.critical_distance(spec, UserGeometry.typical(0.0, spec), QuadratureGrid(64, 64))
        assert dc == spec.max_visible_distance

    def test_equatorial_ring_matches_brute_force(self):
        # a near-equatorial ring seen from the equator: the worst case is a user
        # midway between two neighbours, which a 1-D scan over omega_bar finds
        n = 40
        spec = ConstellationSpec(1, n, 1e-6, 6921 * KM, 6370 * KM)
        user = UserGeometry.typical(0.0, spec)
        omegas = np.linspace(0, spec.omega_interval, 20001)
        cos = geometry.cos_angles_batch(spec, 0.0, np.zeros_like(omegas), omegas).reshape(len(omegas), -1).max(axis=1)
        brute = geometry.cos_kappa_to_distance(cos.min(), spec)
        chord = geometry.cos_kappa_to_distance(math.cos(math.pi / n), spec)
        assert brute == pytest.approx(chord, abs=1.0)
        dc = analysis.critical_distance(spec, user, QuadratureGrid(16, 64), refine_tolerance=10.0)
        assert dc == pytest.approx(brute, abs=20.0)

    def test_bounds_monte_carlo_maximum(self, small_spec):
        user = UserGeometry.typical(LAT15, small_spec)
        dc = analysis.critical_distance(small_spec, user, QuadratureGrid(128, 128))
        d = montecarlo.empirical_nearest_distances(small_spec, user, EnsembleConfig(50_000, 5))
        assert d.max() <= dc + 100.0
        assert d.max() > dc - 5 * KM
        assert analysis.distance_ccdf(small_spec, user, dc + 10 * KM, QuadratureGrid(256, 256)) == 0.0
        assert analysis.distance_ccdf(small_spec, user, dc - 10 * KM, QuadratureGrid(256, 256)) > 0.0


class TestInterference:
    def test_laplace_at_zero(self, fig4):
        spec, budget = fig4
        user = UserGeometry.typical(LAT15, spec)
        assert analysis.interference_laplace(spec, budget, link.rayleigh_fading(), user, 0.0, G64) == 1.0

    def test_laplace_non_increasing(self, fig4):
        spec, budget = fig4
        s = np.logspace(3, 9, 13)
        vals = analysis.interference_laplace(spec, budget, link.rayleigh_fading(), UserGeometry.typical(LAT15, spec), s, G64)
        assert np.all(np.diff(vals) <= 0)
        with pytest.raises(ValueError):
            analysis.interference_laplace(spec, budget, link.rayleigh_fading(), UserGeometry.typical(LAT15, spec), -1.0, G64)

    def test_polar_user_sees_nothing(self, fig4):
        spec, budget = fig4
        pole = UserGeometry.typical(math.pi / 2, spec)
        assert np.all(~np.isfinite(analysis.nearest_distances(spec, pole, G64)))
        vals = analysis.interference_laplace(spec, budget, link.rayleigh_fading(), pole, [1e6, 1e12], G64)
        np.testing.assert_array_equal(vals, 1.0)
        assert analysis.mean_interference(spec, budget, pole, G64) == 0.0

    def test_single_overhead_term(self, fig3_spec):
        budget = LinkBudget.from_db(20.0, 24.0, 0.0, 946 * KM)
        visible, power = analysis._link_terms(np.array([[1.0, -1.0]]), fig3_spec, budget)
        assert visible.tolist() == [[True, False]]
        assert power[0, 0] == pytest.approx(link.mean_rx_power(551 * KM, budget), rel=1e-12)

    def test_mean_is_log_laplace_slope(self, fig4):
        spec, budget = fig4
        user = UserGeometry.typical(LAT15, spec)
        mean = analysis.mean_interference(spec, budget, user, G64)
        s = 1e-4 / mean
        lap = analysis.interference_laplace(spec, budget, link.deterministic_fading(), user, s, G64)
        assert -math.log(lap) / s == pytest.approx(mean, rel=1e-3)

    def test_product_form_differs(self, fig4):
        spec, budget = fig4
        user = UserGeometry.typical(LAT15, spec)
        total = analysis.mean_interference(spec, budget, user, G64)
        product = analysis.mean_interference(spec, budget, user, G64, form="product")
        assert product != pytest.approx(total, rel=0.5)
        with pytest.raises(ValueError):
            analysis.mean_interference(spec, budget, user, G64, form="median")

    def test_peak_at_thirty_degrees(self, fig4):
        spec, budget = fig4
        means = {
            lat: analysis.mean_interference(spec, budget, UserGeometry.typical(math.radians(lat), spec), QuadratureGrid(128, 128))
            for lat in (0, 15, 30, 45, 60)
        }
        assert max(means, key=means.get) == 30


class TestCoverage:
    def test_monotone_in_tau(self, fig5):
        spec, budget = fig5
        taus = link.db_to_linear(np.array([-10.0, -5.0, 0.0, 5.0, 10.0]))
        cov = analysis.coverage_curve(spec, budget, link.rayleigh_fading(), UserGeometry.typical(LAT15, spec), taus, G64)
        assert np.all(np.diff(cov) <= 0)
        assert np.all((cov >= 0) & (cov <= 1))

    def test_small_tau_limit_is_visibility(self):
        spec = ConstellationSpec(3, 5, math.radians(33), 6921 * KM, 6370 * KM)
        budget = LinkBudget.from_db(20.0, 30.0, 0.0, 946 * KM, noise_power=1e-13)
        user = UserGeometry.typical(LAT15, spec)
        holes = analysis.distance_ccdf(spec, user, spec.max_visible_distance, G64)
        cov = analysis.coverage_curve(spec, budget, link.rayleigh_fading(), user, [1e-12], G64)
        assert cov[0] == pytest.approx(1 - holes, abs=1e-6)

    def test_huge_noise_kills_coverage(self, fig5):
        spec, _ = fig5
        loud = LinkBudget.from_db(20.0, 30.0, 0.0, 946 * KM, noise_power=1e3)
        cov = analysis.coverage_curve(spec, loud, link.rayleigh_fading(), UserGeometry.typical(LAT15, spec), [0.1], G64)
        assert cov[0] == pytest.approx(0.0, abs=1e-12)

    def test_probability_wrapper(self, fig5):
        spec, budget = fig5
        user = UserGeometry.typical(LAT15, spec)
        curve = analysis.coverage_curve(spec, budget, link.rayleigh_fading(), user, [1.0], G64)
        p = analysis.coverage_probability(spec, budget, link.rayleigh_fading(), user, CoverageQuery(1.0), G64)
        assert p == curve[0]

    def test_closed_form_needs_rayleigh(self, fig5):
        spec, budget = fig5
        with pytest.raises(ValueError):
            analysis.coverage_curve(
                spec, budget, link.deterministic_fading(), UserGeometry.typical(0.0, spec), [1.0], G64, closed_form=True
            )

    @pytest.mark.parametrize(
        "n_o, n_s, phi_deg, lat_deg, gt_db, tau_db",
        [(4, 6, 33, 15, 30, 0.0), (6, 5, 53, 40, 20, -5.0), (5, 8, 70, -20, 24, 5.0)],
    )
    def test_closed_form_matches_sampled_inner_expectation(self, n_o, n_s, phi_deg, lat_deg, gt_db, tau_db):
        spec = ConstellationSpec(n_o, n_s, math.radians(phi_deg), 6921 * KM, 6370 * KM)
        budget = LinkBudget.from_db(20.0, gt_db, 0.0, 946 * KM, noise_power=2e-13)
        user = UserGeometry.typical(math.radians(lat_deg), spec)
        taus = link.db_to_linear(np.array([tau_db - 5, tau_db, tau_db + 5]))
        grid = QuadratureGrid(4, 4)
        ray = link.rayleigh_fading()
        closed = analysis.coverage_curve(spec, budget, ray, user, taus, grid)
        sampled = analysis.coverage_curve(spec, budget, ray, user, taus, grid, fading_draws=100_000, seed=4, closed_form=False)
        assert np.max(np.abs(closed - sampled)) < 0.01

    def test_deterministic_fading_generic_path(self, fig5):
        spec, budget = fig5
        user = UserGeometry.typical(LAT15, spec)
        cov = analysis.coverage_curve(spec, budget, link.deterministic_fading(), user, [0.01, 1.0, 100.0], QuadratureGrid(16, 16), fading_draws=4)
        assert np.all(np.diff(cov) <= 0)
