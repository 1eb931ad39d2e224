"""Acceptance suite: seven end-to-end checks of the analytic model against
its Monte Carlo oracle, a few quoted reference numbers and a set of
invariants.

Each check returns a :class:`Result`. ``walker-sg --self-test`` and the
pytest acceptance module both run them through :func:`run_all`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from walker_sg import analysis, dynamics, geometry, link, montecarlo
from walker_sg.analysis import QuadratureGrid
from walker_sg.dynamics import AngularSpeeds, NearestDistance
from walker_sg.geometry import ConstellationSpec, OffsetPair, UserGeometry
from walker_sg.montecarlo import EnsembleConfig

KM = 1e3
ORBIT_RADIUS = 6921 * KM
EARTH_RADIUS = 6370 * KM
INCLINATION = math.radians(33)
LATITUDE = math.radians(15)
SAMPLES = 100_000
SEED = 20240501


@dataclass(frozen=True)
class Result:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number}. {self.title}: {self.detail} ({self.seconds:.1f} s)"


def _spec(n_o, n_s):
    return ConstellationSpec(n_o, n_s, INCLINATION, ORBIT_RADIUS, EARTH_RADIUS)


def _ensemble(seed=SEED):
    return EnsembleConfig(SAMPLES, seed, 0.99)


def distance_oracle(threads=None):
    """Analytic vs empirical nearest-distance CCDF, sup-norm <= 0.01."""
    parts, ok = [], True
    for n_o, n_s in ((20, 20), (30, 50)):
        spec = _spec(n_o, n_s)
        user = UserGeometry.typical(LATITUDE, spec)
        d = np.linspace(spec.min_distance, spec.max_visible_distance, 241)
        analytic = analysis.distance_ccdf(spec, user, d, threads=threads)
        emp = montecarlo.empirical_distance_ccdf(spec, user, d, _ensemble(), threads)
        rep = montecarlo.compare_curve(analytic, emp, 0.01)
        ok &= rep.passed
        parts.append(f"({n_o},{n_s}) sup={rep.sup_norm:.4f}")
    return ok, ", ".join(parts) + " (tol 0.01)"


def critical_distance(threads=None):
    """d_c in [725, 825] km, CCDF zero just above it and positive just below."""
    spec = _spec(30, 50)
    user = UserGeometry.typical(LATITUDE, spec)
    dc = analysis.critical_distance(spec, user, threads=threads)
    above, below = analysis.distance_ccdf(spec, user, [dc + 10 * KM, dc - 10 * KM], threads=threads)
    in_band = 725 * KM <= dc <= 825 * KM
    ok = in_band and above == 0.0 and below > 0.0
    detail = (
        f"d_c={dc / KM:.1f} km (band [725, 825] km: {'in' if in_band else 'OUT'}), "
        f"ccdf(d_c+10km)={above:.3g}, ccdf(d_c-10km)={below:.3g}"
    )
    return ok, detail


def _fig4_setup():
    spec = ConstellationSpec(30, 75, INCLINATION, ORBIT_RADIUS, EARTH_RADIUS)
    budget = link.LinkBudget.from_db(20.0, 24.0, 0.0, 946 * KM, pathloss_exponent=2.0)
    return spec, budget


def interference_oracle(threads=None):
    """Mean interference within 2 %, Laplace transform within 0.005, peak near 30 deg."""
    spec, budget = _fig4_setup()
    fading = link.rayleigh_fading()
    s_values = np.array([1e12, 1e13])
    ok, means, worst_rel, worst_lap = True, {}, 0.0, 0.0
    for lat_deg in (0, 15, 30, 45, 60):
        user = UserGeometry.typical(math.radians(lat_deg), spec)
        mean = analysis.mean_interference(spec, budget, user, threads=threads)
        t = montecarlo.empirical_interference(spec, budget, fading, user, _ensemble(), threads)
        emp = float(np.mean(t))
        rel = 0.0 if mean == emp == 0.0 else abs(emp - mean) / abs(mean) if mean else math.inf
        lap = analysis.interference_laplace(spec, budget, fading, user, s_values, threads=threads)
        lap_emp = np.array([np.mean(np.exp(-s * t)) for s in s_values])
        gap = float(np.max(np.abs(lap - lap_emp)))
        means[lat_deg] = mean
        worst_rel, worst_lap = max(worst_rel, rel), max(worst_lap, gap)
        ok &= rel <= 0.02 and gap <= 0.005
    peak = means[30] > means[0]
    ok &= peak
    detail = (
        f"max rel err={worst_rel:.4f} (tol 0.02), max |L-L_emp|={worst_lap:.1e} (tol 0.005), "
        f"mean(30deg)={means[30]:.3e} W > mean(0deg)={means[0]:.3e} W: {peak}"
    )
    return ok, detail


def coverage_oracle(threads=None):
    """Rayleigh coverage within 0.015 of Monte Carlo; closed form vs sampled inner expectation within 0.01."""
    spec = _spec(25, 30)
    noise = link.noise_from_temperature(300.0, 7.0, 10e6)
    budget = link.LinkBudget.from_db(20.0, 30.0, 0.0, 946 * KM, noise_power=noise)
    fading = link.rayleigh_fading()
    user = UserGeometry.typical(LATITUDE, spec)
    taus = link.db_to_linear(np.array([-10.0, -5.0, 0.0, 5.0, 10.0]))
    analytic = analysis.coverage_curve(spec, budget, fading, user, taus, threads=threads)
    emp = montecarlo.empirical_coverage(spec, budget, fading, user, taus, _ensemble(), threads)
    rep = montecarlo.compare_curve(analytic, emp, 0.015)
    grid = QuadratureGrid(64, 64)
    closed = analysis.coverage_curve(spec, budget, fading, user, taus, grid, threads=threads)
    sampled = analysis.coverage_curve(
        spec, budget, fading, user, taus, grid, fading_draws=1000, seed=SEED, closed_form=False, threads=threads
    )
    inner = float(np.max(np.abs(closed - sampled)))
    ok = rep.passed and inner <= 0.01
    return ok, f"sup |analytic-empirical|={rep.sup_norm:.4f} (tol 0.015), closed vs sampled={inner:.1e} (tol 0.01)"


def ergodicity(threads=None):
    """Irrational speeds: time average of nearest distance within 2 % of the ensemble mean."""
    spec = _spec(25, 30)
    user = UserGeometry.typical(LATITUDE, spec)
    speeds = AngularSpeeds.physical(spec.orbit_radius)
    rep = montecarlo.ergodicity_experiment(
        spec, speeds, user, 1e7, dynamics.default_step(speeds, spec), _ensemble(), OffsetPair(0.01, 0.02),
        threads=threads,
    )
    detail = (
        f"time avg={rep.empirical_value / KM:.3f} km, ensemble={rep.analytic_value / KM:.3f} km, "
        f"rel err={rep.relative_error:.2e} (tol 0.02)"
    )
    return rep.passed, detail


def periodicity(threads=None):
    """Rational 1/14: exact return after the period; distinct initial offsets give distinct averages."""
    spec = _spec(20, 20)
    speeds = AngularSpeeds.rational(2 * math.pi / 86164, 1, 14)
    regime = dynamics.classify(speeds, spec)
    start = OffsetPair(0.01, 0.002)
    back = dynamics.offsets_at(start, speeds, spec, regime.period)
    err = max(
        _circular_gap(back.theta_bar, start.theta_bar, spec.theta_interval),
        _circular_gap(back.omega_bar, start.omega_bar, spec.omega_interval),
    )
    returns = err <= 1e-9 and abs(regime.period - 4308.2) < 1e-6

    user = UserGeometry.typical(LATITUDE, spec)
    metric = NearestDistance(user)
    step = dynamics.default_step(speeds, spec)
    # half a winding spacing apart: the two orbits are as far apart as the torus allows
    second = OffsetPair(0.0, spec.omega_interval / 28)
    avg_a = dynamics.time_average(metric, OffsetPair(0.0, 0.0), speeds, spec, regime.period, step, threads)
    avg_b = dynamics.time_average(metric, second, speeds, spec, regime.period, step, threads)
    ens = _ensemble()
    floor = montecarlo.normal_mean(montecarlo.empirical_nearest_distances(spec, user, ens, threads), ens.z).half_width
    separated = abs(avg_a - avg_b) > floor
    detail = (
        f"period={regime.period:.4f} s, return err={err:.2e} rad (tol 1e-9): {returns}; "
        f"|avg_a-avg_b|={abs(avg_a - avg_b):.2f} m vs noise floor {floor:.1f} m: {separated}"
    )
    return returns and separated, detail


def _circular_gap(a, b, period):
    d = abs(a - b) % period
    return min(d, period - d)


def invariants(threads=None):
    """Property checks: geometry counts and norms, CCDF shape, symmetries, RNG and thread stability."""
    gen = np.random.default_rng(SEED)
    failures = []

    for _ in range(1000):
        n_o, n_s = int(gen.integers(1, 40)), int(gen.integers(1, 40))
        e = float(gen.uniform(1e6, 7e6))
        spec = ConstellationSpec(n_o, n_s, float(gen.uniform(1e-3, math.pi - 1e-3)), e * float(gen.uniform(1.01, 3)), e)
        offs = OffsetPair(float(gen.uniform(0, spec.theta_interval)), float(gen.uniform(0, spec.omega_interval)))
        sats = geometry.snapshot(spec, offs)
        norms = np.linalg.norm(sats.positions, axis=-1)
        if sats.positions.shape != (n_o, n_s, 3) or not np.allclose(norms, spec.orbit_radius, rtol=1e-12):
            failures.append("sphere norm/count")
            break

    spec = _spec(20, 20)
    grid = QuadratureGrid(128, 128)
    user = UserGeometry.typical(LATITUDE, spec)
    d = np.linspace(spec.min_distance, spec.max_visible_distance, 200)
    ccdf = analysis.distance_ccdf(spec, user, d, grid, threads)
    if np.any(np.diff(ccdf) > 0):
        failures.append("CCDF monotone")
    south = analysis.distance_ccdf(spec, UserGeometry.typical(-LATITUDE, spec), d, grid, threads)
    if np.max(np.abs(ccdf - south)) > 2e-3:
        failures.append("latitude symmetry")
    east = UserGeometry(LATITUDE, spec.earth_radius, longitude=1.234)
    if np.max(np.abs(ccdf - analysis.distance_ccdf(spec, east, d, grid, threads))) > 2e-3:
        failures.append("longitude invariance")

    spec_i, budget = _fig4_setup()
    user_i = UserGeometry.typical(LATITUDE, spec_i)
    if analysis.interference_laplace(spec_i, budget, link.rayleigh_fading(), user_i, 0.0, grid, threads) != 1.0:
        failures.append("L_T(0)=1")

    noise = link.noise_from_temperature(300.0, 7.0, 10e6)
    b5 = link.LinkBudget.from_db(20.0, 30.0, 0.0, 946 * KM, noise_power=noise)
    cov = analysis.coverage_curve(
        _spec(25, 30), b5, link.rayleigh_fading(), user, link.db_to_linear(np.linspace(-20, 20, 21)), grid, threads=threads
    )
    if np.any(np.diff(cov) > 0):
        failures.append("coverage monotone in tau")

    coarse = analysis.distance_ccdf(spec, user, d, QuadratureGrid(64, 64), threads)
    fine = analysis.distance_ccdf(spec, user, d, QuadratureGrid(512, 512), threads)
    if not np.max(np.abs(fine - ccdf)) <= np.max(np.abs(fine - coarse)) + 1e-12:
        failures.append("grid refinement convergence")

    # uniform offsets stay uniform under the flow: compare against a fresh uniform sample
    speeds = AngularSpeeds.physical(spec.orbit_radius)
    th, om = montecarlo.sample_offset_arrays(EnsembleConfig(SAMPLES, SEED), spec)
    ref_th, ref_om = montecarlo.sample_offset_arrays(EnsembleConfig(SAMPLES, SEED + 1), spec)
    p_min = 1.0
    for t in (123.4, 5.6e4, 7.89e6):
        th_t, om_t = dynamics.advance(th, om, speeds, spec, t)
        p_min = min(p_min, stats.ks_2samp(th_t, ref_th).pvalue, stats.ks_2samp(om_t, ref_om).pvalue)
    if p_min < 0.01:
        failures.append(f"time invariance KS (p={p_min:.3g})")

    runs = []
    for n in (1, 4, 8):
        dist = montecarlo.empirical_nearest_distances(spec, user, EnsembleConfig(50_000, SEED), threads=n)
        runs.append(dist.tobytes())
    if len(set(runs)) != 1:
        failures.append("bit-identical across threads")

    detail = "all invariants hold" if not failures else "violated: " + ", ".join(failures)
    return not failures, detail + f" (KS min p={p_min:.3f})"


CRITERIA = (
    (1, "distance CCDF vs Monte Carlo", distance_oracle),
    (2, "critical distance", critical_distance),
    (3, "interference mean and Laplace vs Monte Carlo", interference_oracle),
    (4, "Rayleigh coverage vs Monte Carlo", coverage_oracle),
    (5, "ergodic time average", ergodicity),
    (6, "periodic regime", periodicity),
    (7, "invariant suite", invariants),
)


def run_one(number, threads=None) -> Result:
    _, title, fn = CRITERIA[number - 1]
    t0 = time.perf_counter()
    passed, detail = fn(threads)
    return Result(number, title, bool(passed), detail, time.perf_counter() - t0)


def run_all(threads=None, echo=False):
    results = []
    for number, _, _ in CRITERIA:
        res = run_one(number, threads)
        if echo:
            print(res.line(), flush=True)
        results.append(res)
    return results
