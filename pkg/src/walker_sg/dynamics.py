"""Offset dynamics on the torus, regime classification and time averages.

Earth spin drags every ascending node westward in the Earth-fixed frame,
while orbital motion advances every phase:

    theta_bar(t) = theta_bar - v_theta t  mod 2 pi / N_o
    omega_bar(t) = omega_bar + v_omega t  mod 2 pi / N_s

Internally the state lives on the unit torus (each offset divided by its
interval), where the flow is a linear rotation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from walker_sg import geometry
from walker_sg._parallel import chunk_for, map_chunks
from walker_sg.geometry import ConstellationSpec, OffsetPair, SatelliteSet, UserGeometry

SIDEREAL_DAY = 86164.0905
MU_EARTH = 3.986004418e14
RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class AngularSpeeds:
    """Earth spin and satellite angular rate, in rad/s.

    ``ratio`` declares ``earth_spin / satellite_rate``: a ``Fraction`` for a
    rational ratio, ``None`` for an irrational one. Floating-point speeds
    cannot tell the two apart, so the caller states it.
    """

    earth_spin: float
    satellite_rate: float
    ratio: Fraction | None = None

    def __post_init__(self):
        problems = speeds_violations(self.earth_spin, self.satellite_rate, self.ratio)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def is_rational(self):
        return self.ratio is not None

    @classmethod
    def physical(cls, orbit_radius, mu=MU_EARTH):
        """Sidereal Earth spin and circular-orbit mean motion, declared irrational."""
        return cls(2.0 * math.pi / SIDEREAL_DAY, math.sqrt(mu / orbit_radius**3), None)

    @classmethod
    def rational(cls, earth_spin, p, q):
        """Speeds with ``earth_spin / satellite_rate == p / q`` exactly."""
        ratio = Fraction(p, q)
        if ratio <= 0:
            raise ValueError("a rational speed ratio must be positive")
        return cls(earth_spin, earth_spin * ratio.denominator / ratio.numerator, ratio)


def speeds_violations(earth_spin, satellite_rate, ratio):
    out = []
    if not earth_spin >= 0.0:
        out.append(f"earth_spin must be >= 0 (got {earth_spin!r})")
    if not satellite_rate > 0.0:
        out.append(f"satellite_rate must be positive (got {satellite_rate!r})")
    if out or ratio is None:
        if ratio is None and earth_spin == 0.0:
            out.append("earth_spin = 0 gives a rational (zero) ratio; declare it as 0/1")
        return out
    ratio = Fraction(ratio)
    if ratio.numerator < 0:
        out.append(f"declared ratio {ratio} must be non-negative")
        return out
    lhs = earth_spin * ratio.denominator
    rhs = satellite_rate * ratio.numerator
    if abs(lhs - rhs) > RATIO_RTOL * max(abs(lhs), abs(rhs)):
        out.append(
            f"declared ratio {ratio} inconsistent with speeds: "
            f"earth_spin/satellite_rate = {earth_spin / satellite_rate!r}"
        )
    return out


@dataclass(frozen=True)
class NormalizedTorusState:
    """Offsets divided by their intervals; both coordinates in ``[0, 1)``."""

    theta_unit: float
    omega_unit: float


def normalize(offsets: OffsetPair, spec: ConstellationSpec) -> NormalizedTorusState:
    return NormalizedTorusState(
        geometry.wrap(offsets.theta_bar / spec.theta_interval, 1.0),
        geometry.wrap(offsets.omega_bar / spec.omega_interval, 1.0),
    )


def denormalize(state: NormalizedTorusState, spec: ConstellationSpec) -> OffsetPair:
    return OffsetPair(state.theta_unit * spec.theta_interval, state.omega_unit * spec.omega_interval)


class Regime(enum.Enum):
    PERIODIC = "periodic"
    ERGODIC = "ergodic"


@dataclass(frozen=True)
class RegimeClassification:
    kind: Regime
    period: float | None = None

    def __post_init__(self):
        if self.kind is Regime.PERIODIC and not (self.period is not None and self.period > 0):
            raise ValueError("a periodic regime needs a positive period")


def _two_product(a, b):
    """Dekker's error-free product: ``a * b == p + err`` exactly."""
    split = 134217729.0
    p = a * b
    ca = split * a
    ah = ca - (ca - a)
    al = a - ah
    cb = split * b
    bh = cb - (cb - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def _frac_product(v, t):
    """Fractional part of ``v * t`` without losing the low-order bits of the product."""
    p, err = _two_product(np.asarray(v, dtype=float), np.asarray(t, dtype=float))
    return (p - np.floor(p)) + err


def unit_rates(speeds: AngularSpeeds, spec: ConstellationSpec):
    """Rates on the unit torus (cycles per second) for theta and omega."""
    return speeds.earth_spin / spec.theta_interval, speeds.satellite_rate / spec.omega_interval


def advance(theta_bars, omega_bars, speeds: AngularSpeeds, spec: ConstellationSpec, times):
    """Offsets after flowing for ``times``; all arguments broadcast together."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    v_theta, v_omega = unit_rates(speeds, spec)
    theta_u = np.asarray(theta_bars, dtype=float) / spec.theta_interval
    omega_u = np.asarray(omega_bars, dtype=float) / spec.omega_interval
    theta_u = geometry.wrap(theta_u - _frac_product(v_theta, times), 1.0)
    omega_u = geometry.wrap(omega_u + _frac_product(v_omega, times), 1.0)
    return np.asarray(theta_u) * spec.theta_interval, np.asarray(omega_u) * spec.omega_interval


def offset_trajectory(initial: OffsetPair, speeds: AngularSpeeds, spec: ConstellationSpec, times):
    """Offsets at every time in ``times``; returns ``(theta_bars, omega_bars)`` arrays."""
    state = normalize(initial, spec)
    return advance(
        state.theta_unit * spec.theta_interval, state.omega_unit * spec.omega_interval, speeds, spec, times
    )


def offsets_at(initial: OffsetPair, speeds: AngularSpeeds, spec: ConstellationSpec, t) -> OffsetPair:
    if t < 0:
        raise ValueError("t must be non-negative")
    th, om = offset_trajectory(initial, speeds, spec, float(t))
    return OffsetPair(float(th), float(om))


def cycle_lengths(speeds: AngularSpeeds, spec: ConstellationSpec):
    """Seconds for each offset to sweep its interval once (``inf`` if frozen)."""
    c_theta = spec.theta_interval / speeds.earth_spin if speeds.earth_spin > 0 else math.inf
    return c_theta, spec.omega_interval / speeds.satellite_rate


def classify(speeds: AngularSpeeds, spec: ConstellationSpec) -> RegimeClassification:
    """Periodic (with exact period) for a declared rational ratio, else ergodic.

    With ``v_theta / v_omega = p / q`` the theta cycle is ``C_theta`` and the
    omega cycle is ``C_theta * p N_o / (q N_s)``. The joint period is the
    smallest ``m C_theta`` that is also a whole number of omega cycles, i.e.
    ``m = p N_o / gcd(q N_s, p N_o)``.
    """
    problems = speeds_violations(speeds.earth_spin, speeds.satellite_rate, speeds.ratio)
    if problems:
        raise ValueError("; ".join(problems))
    if speeds.ratio is None:
        return RegimeClassification(Regime.ERGODIC)
    p, q = speeds.ratio.numerator, speeds.ratio.denominator
    c_theta, c_omega = cycle_lengths(speeds, spec)
    if p == 0:
        return RegimeClassification(Regime.PERIODIC, c_omega)
    a = p * spec.n_orbits
    m = a // math.gcd(q * spec.sats_per_orbit, a)
    return RegimeClassification(Regime.PERIODIC, m * c_theta)


def default_step(speeds: AngularSpeeds, spec: ConstellationSpec):
    return cycle_lengths(speeds, spec)[1] / 64.0


class NearestDistance:
    """Distance from a user to the nearest visible satellite (``inf`` if none)."""

    def __init__(self, user: UserGeometry):
        self.user = user

    def __call__(self, sats: SatelliteSet) -> float:
        hit = geometry.nearest_satellite(sats, self.user)
        return math.inf if hit is None else hit[1]

    def batch(self, spec: ConstellationSpec, theta_bars, omega_bars):
        cos = geometry.cos_angles_batch(spec, self.user.latitude, theta_bars, omega_bars, self.user.longitude)
        best = cos.reshape(len(cos), -1).max(axis=1)
        d = geometry.cos_kappa_to_distance(best, spec)
        return np.where(best >= spec.visibility_cos, d, np.inf)


def time_average(
    metric,
    initial: OffsetPair,
    speeds: AngularSpeeds,
    spec: ConstellationSpec,
    horizon,
    step=None,
    threads=None,
):
    """Left-endpoint Riemann average of ``metric`` along the trajectory.

    ``metric`` maps a :class:`SatelliteSet` to a non-negative number. If it
    also has ``batch(spec, theta_bars, omega_bars)``, whole blocks of time
    points are evaluated at once.
    """
    if step is None:
        step = default_step(speeds, spec)
    if not horizon > 0 or not 0 < step <= horizon:
        raise ValueError("need horizon > 0 and 0 < step <= horizon")
    # the small slack keeps horizon = M * step from rounding down to M - 1
    n_steps = int(math.floor(horizon / step + 1e-9))
    batch = getattr(metric, "batch", None)

    def block(start, stop):
        times = np.arange(start, stop, dtype=float) * step
        th, om = offset_trajectory(initial, speeds, spec, times)
        if batch is not None:
            return np.asarray(batch(spec, th, om), dtype=float)
        return np.array([float(metric(geometry.snapshot(spec, OffsetPair(a, b)))) for a, b in zip(th, om)])

    values = map_chunks(block, n_steps, chunk_for(spec.n_satellites, 2_000_000), threads)
    return float(np.sum(values) / n_steps)
