"""Monte Carlo oracle: sample offset pairs, build the satellites explicitly
and measure every quantity the quadrature predicts.

This path shares no code with ``analysis`` beyond the model definition:
positions come from the Cartesian orbit formulas, distances from vector
norms, gains from ``link.antenna_gain`` and fading from sampled variates.
All randomness is counter-based, keyed by ``(seed, stream, sample, satellite)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from walker_sg import analysis, dynamics, rng
from walker_sg._parallel import chunk_for, map_chunks
from walker_sg.dynamics import AngularSpeeds, NearestDistance, Regime
from walker_sg.geometry import ConstellationSpec, OffsetPair, UserGeometry, snapshot_positions
from walker_sg.link import FadingModel, LinkBudget, antenna_gain


@dataclass(frozen=True)
class EnsembleConfig:
    n_samples: int = 100_000
    seed: int = 0
    confidence: float = 0.99

    def __post_init__(self):
        if self.n_samples < 100:
            raise ValueError("n_samples must be >= 100")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def z(self):
        return float(stats.norm.ppf(0.5 + self.confidence / 2))


class Estimate(NamedTuple):
    """Point estimate with a confidence interval ``[low, high]``."""

    value: float
    half_width: float
    low: float
    high: float

    def contains(self, x):
        return self.low <= x <= self.high


@dataclass(frozen=True)
class ComparisonReport:
    analytic_value: float
    empirical_value: float
    half_width: float
    sup_norm: float
    passed: bool
    note: str = ""

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")

    @property
    def relative_error(self):
        if self.analytic_value == 0:
            return 0.0 if self.empirical_value == 0 else math.inf
        return abs(self.empirical_value - self.analytic_value) / abs(self.analytic_value)


def wilson(successes, n, z):
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    hw = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    low = 0.0 if successes == 0 else max(center - hw, 0.0)
    high = 1.0 if successes == n else min(center + hw, 1.0)
    return Estimate(p, hw, low, high)


def normal_mean(values, z):
    values = np.asarray(values, dtype=float)
    m = float(np.mean(values))
    hw = z * float(np.std(values, ddof=1)) / math.sqrt(len(values))
    return Estimate(m, hw, m - hw, m + hw)


# -- sampling ---------------------------------------------------------------------


def sample_offset_arrays(config: EnsembleConfig, spec: ConstellationSpec, start=0, stop=None):
    """Offsets for samples ``start..stop-1`` as ``(theta_bars, omega_bars)``."""
    stop = config.n_samples if stop is None else stop
    k = np.arange(start, stop)
    u_th = rng.uniform(config.seed, rng.STREAM_OFFSETS, k, 0)
    u_om = rng.uniform(config.seed, rng.STREAM_OFFSETS, k, 1)
    return u_th * spec.theta_interval, u_om * spec.omega_interval


def sample_offsets(config: EnsembleConfig, k: int, spec: ConstellationSpec) -> OffsetPair:
    if not 0 <= k < config.n_samples:
        raise IndexError(f"sample index {k} outside [0, {config.n_samples})")
    th, om = sample_offset_arrays(config, spec, k, k + 1)
    return OffsetPair(float(th[0]), float(om[0]))


def _geometry(spec, user, config, start, stop):
    """Central-angle cosines and distances for samples ``start..stop-1``, shape ``(K, N)``."""
    th, om = sample_offset_arrays(config, spec, start, stop)
    pos = snapshot_positions(spec, th, om).reshape(stop - start, -1, 3)
    dot = pos @ user.position
    cos = np.clip(dot / (spec.orbit_radius * user.earth_radius), -1.0, 1.0)
    dist = np.linalg.norm(pos - user.position, axis=-1)
    return cos, dist


def _fading(fading, config, start, visible):
    """Fading variates for the visible entries; zeros elsewhere."""
    rows, cols = np.nonzero(visible)
    h = np.zeros(visible.shape)
    u = rng.uniform(config.seed, rng.STREAM_FADING, rows + start, cols)
    h[rows, cols] = fading.from_uniform(u)
    return h


def _per_sample(spec, config, fn, threads, width=1):
    size = chunk_for(spec.n_satellites * 4 * width, 4_000_000)
    return map_chunks(fn, config.n_samples, size, threads)


def empirical_nearest_distances(spec, user, config: EnsembleConfig, threads=None):
    """Nearest visible-satellite distance per sample (``inf`` if none visible)."""

    def fn(a, b):
        cos, dist = _geometry(spec, user, config, a, b)
        return np.where(cos >= spec.visibility_cos, dist, np.inf).min(axis=1)

    return _per_sample(spec, config, fn, threads)


def empirical_distance_ccdf(spec, user, d_grid, config: EnsembleConfig, threads=None):
    """Fraction of sampled constellations with nearest distance above each ``d``."""
    d = empirical_nearest_distances(spec, user, config, threads)
    n = len(d)
    return [wilson(int(np.count_nonzero(d > dk)), n, config.z) for dk in np.atleast_1d(d_grid)]


def empirical_interference(spec, budget: LinkBudget, fading: FadingModel, user, config: EnsembleConfig, threads=None):
    """Total received power T from every visible satellite, one value per sample."""

    def fn(a, b):
        cos, dist = _geometry(spec, user, config, a, b)
        visible = cos >= spec.visibility_cos
        h = _fading(fading, config, a, visible)
        power = budget.ref_power * antenna_gain(dist, budget) * dist ** (-budget.pathloss_exponent)
        return np.where(visible, power * h, 0.0).sum(axis=1)

    return _per_sample(spec, config, fn, threads)


def empirical_mean_interference(spec, budget, fading, user, config: EnsembleConfig, threads=None):
    return normal_mean(empirical_interference(spec, budget, fading, user, config, threads), config.z)


def empirical_laplace(spec, budget, fading, user, s_values, config: EnsembleConfig, threads=None):
    """Sample means of ``exp(-s T)`` for each ``s``."""
    t = empirical_interference(spec, budget, fading, user, config, threads)
    return [normal_mean(np.exp(-s * t), config.z) for s in np.atleast_1d(s_values)]


def empirical_sinr(spec, budget: LinkBudget, fading: FadingModel, user, config: EnsembleConfig, threads=None):
    """SINR at the nearest visible satellite per sample; 0 when nothing is visible."""

    def fn(a, b):
        cos, dist = _geometry(spec, user, config, a, b)
        visible = cos >= spec.visibility_cos
        h = _fading(fading, config, a, visible)
        rx = np.where(visible, budget.ref_power * antenna_gain(dist, budget) * h * dist ** (-budget.pathloss_exponent), 0.0)
        serving = np.argmin(np.where(visible, dist, np.inf), axis=1)
        rows = np.arange(len(dist))
        covered = visible[rows, serving]
        signal = rx[rows, serving]
        interference = rx.sum(axis=1) - signal
        with np.errstate(divide="ignore"):
            sinr = signal / (interference + budget.noise_power)
        return np.where(covered, sinr, 0.0)

    return _per_sample(spec, config, fn, threads)


def empirical_coverage(spec, budget, fading, user, taus, config: EnsembleConfig, threads=None):
    """Fraction of samples with SINR above each threshold; uncovered samples fail."""
    sinr = empirical_sinr(spec, budget, fading, user, config, threads)
    n = len(sinr)
    return [wilson(int(np.count_nonzero(sinr > t)), n, config.z) for t in np.atleast_1d(taus)]


# -- comparisons --------------------------------------------------------------------


def compare_curve(analytic, estimates, tolerance) -> ComparisonReport:
    """Sup-norm comparison of an analytic curve with empirical estimates."""
    analytic = np.asarray(analytic, dtype=float)
    emp = np.array([e.value for e in estimates])
    gaps = np.abs(analytic - emp)
    k = int(np.argmax(gaps))
    return ComparisonReport(
        analytic_value=float(analytic[k]),
        empirical_value=float(emp[k]),
        half_width=float(max(e.half_width for e in estimates)),
        sup_norm=float(gaps[k]),
        passed=bool(gaps[k] <= tolerance),
    )


def ergodicity_experiment(
    spec: ConstellationSpec,
    speeds: AngularSpeeds,
    user: UserGeometry,
    horizon,
    step=None,
    config: EnsembleConfig | None = None,
    initial: OffsetPair | None = None,
    grid=None,
    tolerance=0.02,
    threads=None,
) -> ComparisonReport:
    """Time average of the nearest distance against its ensemble mean.

    The ensemble mean comes from the quadrature CCDF; ``half_width`` is the
    Monte Carlo noise floor of a direct ensemble estimate with ``config``.
    Settings where some offsets leave the user without a visible satellite
    are refused: the mean distance is infinite there.
    """
    config = config or EnsembleConfig()
    regime = dynamics.classify(speeds, spec)
    ensemble = analysis.expected_nearest_distance(spec, user, grid, threads)
    if ensemble.no_visibility > 0:
        raise ValueError(
            f"coverage holes: no satellite visible for {ensemble.no_visibility:.3%} of offsets; "
            "the mean nearest distance is infinite"
        )
    samples = empirical_nearest_distances(spec, user, config, threads)
    if not np.all(np.isfinite(samples)):
        raise ValueError("coverage holes in the Monte Carlo ensemble; the mean nearest distance is infinite")
    floor = normal_mean(samples, config.z).half_width
    if initial is None:
        initial = sample_offsets(config, 0, spec)
    avg = dynamics.time_average(NearestDistance(user), initial, speeds, spec, horizon, step, threads)
    gap = abs(avg - ensemble.mean)
    note = ""
    if regime.kind is Regime.PERIODIC:
        note = f"periodic (period {regime.period:.6g} s): time average is initial-condition-dependent"
    return ComparisonReport(
        analytic_value=ensemble.mean,
        empirical_value=avg,
        half_width=floor,
        sup_norm=gap,
        passed=bool(gap <= tolerance * ensemble.mean),
        note=note,
    )
