"""Walker constellation point process and geometric predicates.

Orbit longitudes are ``2*pi*i/N_o + theta_bar`` and in-plane phases are
``2*pi*j/N_s + omega_bar``; the two offsets are the only randomness of the
model. All lengths are meters and all angles radians.

Orbit and slot indices follow the usual 1-based labelling (``i = 1..N_o``,
``j = 1..N_s``). Arrays store them 0-based, so ``positions[i - 1, j - 1]``
is the satellite ``(i, j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
EARTH_RADIUS = 6370e3


def wrap(x, period):
    """Floored modulus that always lands in ``[0, period)``.

    ``np.mod`` can return ``period`` itself for tiny negative inputs; those
    are folded back to zero.
    """
    r = np.mod(x, period)
    r = np.where(r >= period, 0.0, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class ConstellationSpec:
    """Static Walker parameters.

    Parameters
    ----------
    n_orbits, sats_per_orbit : int
        Number of orbital planes and satellites per plane.
    inclination : float
        Common inclination in radians, strictly between 0 and pi.
    orbit_radius : float
        Orbit radius in meters.
    earth_radius : float
        Earth radius in meters; defaults to 6370 km.
    """

    n_orbits: int
    sats_per_orbit: int
    inclination: float
    orbit_radius: float
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self):
        return [
            msg
            for _, msg in spec_violations(
                self.n_orbits, self.sats_per_orbit, self.inclination, self.orbit_radius, self.earth_radius
            )
        ]

    @property
    def n_satellites(self):
        return self.n_orbits * self.sats_per_orbit

    @property
    def theta_interval(self):
        return TWO_PI / self.n_orbits

    @property
    def omega_interval(self):
        return TWO_PI / self.sats_per_orbit

    @property
    def visibility_cos(self):
        """Cosine of the largest central angle at which a satellite is visible (e/r)."""
        return self.earth_radius / self.orbit_radius

    @property
    def min_distance(self):
        return self.orbit_radius - self.earth_radius

    @property
    def max_visible_distance(self):
        """Slant range to the horizon, sqrt(r^2 - e^2)."""
        r, e = self.orbit_radius, self.earth_radius
        return math.sqrt(r * r - e * e)


def spec_violations(n_orbits, sats_per_orbit, inclination, orbit_radius, earth_radius):
    """Every broken constellation constraint as ``(field, message)`` pairs."""
    out = []
    if not isinstance(n_orbits, (int, np.integer)) or n_orbits < 1:
        out.append(("n_orbits", f"n_orbits must be a positive integer (got {n_orbits!r})"))
    if not isinstance(sats_per_orbit, (int, np.integer)) or sats_per_orbit < 1:
        out.append(("sats_per_orbit", f"sats_per_orbit must be a positive integer (got {sats_per_orbit!r})"))
    if not 0.0 < inclination < math.pi:
        out.append(("inclination", f"inclination must lie in (0, pi) rad (got {inclination!r})"))
    if not earth_radius > 0.0:
        out.append(("earth_radius", f"earth_radius must be positive (got {earth_radius!r})"))
    if not orbit_radius > earth_radius:
        out.append(
            (
                "orbit_radius",
                f"orbit below Earth surface: orbit_radius {orbit_radius!r} m <= earth_radius {earth_radius!r} m",
            )
        )
    return out


@dataclass(frozen=True)
class OffsetPair:
    """The two offsets ``(theta_bar, omega_bar)`` selecting one pattern.

    Use :meth:`reduced` to build one that honours its half-open intervals.
    """

    theta_bar: float
    omega_bar: float

    @classmethod
    def reduced(cls, spec: ConstellationSpec, theta_bar, omega_bar):
        return cls(wrap(float(theta_bar), spec.theta_interval), wrap(float(omega_bar), spec.omega_interval))

    def is_reduced(self, spec: ConstellationSpec):
        return 0.0 <= self.theta_bar < spec.theta_interval and 0.0 <= self.omega_bar < spec.omega_interval


@dataclass(frozen=True)
class UserGeometry:
    """A ground receiver on the Earth sphere.

    The typical user sits at longitude 0; ``longitude`` exists so rotation
    invariance can be checked.
    """

    latitude: float
    earth_radius: float = EARTH_RADIUS
    longitude: float = 0.0
    position: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not -math.pi / 2 <= self.latitude <= math.pi / 2:
            raise ValueError(f"latitude must lie in [-pi/2, pi/2] (got {self.latitude!r})")
        cl = math.cos(self.latitude)
        pos = self.earth_radius * np.array(
            [cl * math.cos(self.longitude), cl * math.sin(self.longitude), math.sin(self.latitude)]
        )
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    @classmethod
    def typical(cls, latitude, spec: ConstellationSpec | None = None):
        e = spec.earth_radius if spec is not None else EARTH_RADIUS
        return cls(latitude=latitude, earth_radius=e)


@dataclass(frozen=True)
class SatelliteSet:
    """One realization of the satellite point process.

    ``positions`` has shape ``(N_o, N_s, 3)`` and is read-only.
    """

    positions: np.ndarray
    spec: ConstellationSpec

    def __post_init__(self):
        expected = (self.spec.n_orbits, self.spec.sats_per_orbit, 3)
        if self.positions.shape != expected:
            raise ValueError(f"positions shape {self.positions.shape} != {expected}")
        self.positions.setflags(write=False)

    def __len__(self):
        return self.spec.n_satellites

    def __getitem__(self, index):
        i, j = index
        return self.positions[i - 1, j - 1]

    def flat(self):
        """Positions as an ``(N_o * N_s, 3)`` array in lexicographic (i, j) order."""
        return self.positions.reshape(-1, 3)


def orbit_longitudes(spec: ConstellationSpec, theta_bar):
    """Ascending-node longitudes ``theta_i`` for ``i = 1..N_o``."""
    i = np.arange(1, spec.n_orbits + 1)
    return wrap(TWO_PI * i / spec.n_orbits + theta_bar, TWO_PI)


def satellite_phases(spec: ConstellationSpec, omega_bar):
    """In-plane phases ``omega_j`` for ``j = 1..N_s``; shared by every orbit."""
    j = np.arange(1, spec.sats_per_orbit + 1)
    return wrap(TWO_PI * j / spec.sats_per_orbit + omega_bar, TWO_PI)


def satellite_position(r, phi, theta, omega):
    """Cartesian position of a satellite with node longitude ``theta`` and phase ``omega``.

    The in-plane longitude shift is ``atan2(sin(omega) cos(phi), cos(omega))``,
    the quadrant-safe form of ``arctan(tan(omega) cos(phi))``. Inputs
    broadcast; the trailing axis of the result holds ``(x, y, z)``.
    """
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    cos_w, sin_w = np.cos(omega), np.sin(omega)
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    shift = np.arctan2(sin_w * cos_phi, cos_w)
    rho = r * np.sqrt(cos_w**2 + sin_w**2 * cos_phi**2)
    theta, shift, rho, z = np.broadcast_arrays(theta, shift, rho, r * sin_w * sin_phi)
    x = rho * np.cos(shift + theta)
    y = rho * np.sin(shift + theta)
    return np.stack([x, y, z], axis=-1)


def snapshot(spec: ConstellationSpec, offsets: OffsetPair) -> SatelliteSet:
    thetas = orbit_longitudes(spec, offsets.theta_bar)
    omegas = satellite_phases(spec, offsets.omega_bar)
    pos = satellite_position(spec.orbit_radius, spec.inclination, thetas[:, None], omegas[None, :])
    return SatelliteSet(np.ascontiguousarray(pos), spec)


def snapshot_positions(spec: ConstellationSpec, theta_bars, omega_bars):
    """Positions for a batch of offset pairs, shape ``(K, N_o, N_s, 3)``."""
    theta_bars = np.asarray(theta_bars, dtype=float)
    omega_bars = np.asarray(omega_bars, dtype=float)
    i = np.arange(1, spec.n_orbits + 1)
    j = np.arange(1, spec.sats_per_orbit + 1)
    thetas = wrap(TWO_PI * i[None, :] / spec.n_orbits + theta_bars[:, None], TWO_PI)
    omegas = wrap(TWO_PI * j[None, :] / spec.sats_per_orbit + omega_bars[:, None], TWO_PI)
    return satellite_position(spec.orbit_radius, spec.inclination, thetas[:, :, None], omegas[:, None, :])


def cos_central_angle(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    nx = np.linalg.norm(x)
    nu = np.linalg.norm(u)
    if nx == 0.0 or nu == 0.0:
        raise ValueError("central angle undefined for a zero vector")
    return float(np.clip(np.dot(x, u) / (nx * nu), -1.0, 1.0))


def distance_to_cos_kappa(d, spec: ConstellationSpec):
    """Cosine of the cap half-angle whose rim is at distance ``d`` from the user.

    Law of cosines: ``(r^2 + e^2 - d^2) / (2 r e)``. Raises ``ValueError``
    when ``d`` is not a realizable user-to-orbit distance.
    """
    r, e = spec.orbit_radius, spec.earth_radius
    d = np.asarray(d, dtype=float)
    if np.any(d < r - e) or np.any(d > r + e):
        raise ValueError(f"distance outside [{r - e}, {r + e}] m")
    out = (r * r + e * e - d * d) / (2.0 * r * e)
    return float(out) if out.ndim == 0 else out


def cos_kappa_to_distance(cos_kappa, spec: ConstellationSpec):
    r, e = spec.orbit_radius, spec.earth_radius
    c = np.asarray(cos_kappa, dtype=float)
    out = np.sqrt(np.maximum(r * r + e * e - 2.0 * r * e * c, 0.0))
    return float(out) if out.ndim == 0 else out


def is_visible(x, user: UserGeometry, spec: ConstellationSpec):
    """True when the satellite at ``x`` is above the user's horizon (inclusive)."""
    return cos_central_angle(x, user.position) >= spec.visibility_cos


def nearest_satellite(sats: SatelliteSet, user: UserGeometry):
    """Nearest visible satellite as ``((i, j), distance)``, or ``None``.

    Ties go to the lexicographically smallest ``(i, j)``.
    """
    spec = sats.spec
    flat = sats.flat()
    cosines = flat @ user.position / (spec.orbit_radius * user.earth_radius)
    cosines = np.clip(cosines, -1.0, 1.0)
    k = int(np.argmax(cosines))
    if cosines[k] < spec.visibility_cos:
        return None
    i, j = divmod(k, spec.sats_per_orbit)
    return (i + 1, j + 1), float(np.linalg.norm(flat[k] - user.position))


def cos_angles_batch(spec: ConstellationSpec, latitude, theta_bars, omega_bars, longitude=0.0):
    """Cosine of the user-satellite central angle for a batch of offsets.

    Uses the rotation-matrix form of the orbit, which separates into
    per-orbit and per-slot factors:

        cos = cos(l) [cos(t) cos(w) - sin(t) sin(w) cos(phi)] + sin(l) sin(w) sin(phi)

    with ``t = theta_i - longitude``. Returns shape ``(K, N_o, N_s)``.
    """
    theta_bars = np.asarray(theta_bars, dtype=float)
    omega_bars = np.asarray(omega_bars, dtype=float)
    i = np.arange(1, spec.n_orbits + 1)
    j = np.arange(1, spec.sats_per_orbit + 1)
    t = TWO_PI * i[None, :] / spec.n_orbits + (theta_bars[:, None] - longitude)
    w = TWO_PI * j[None, :] / spec.sats_per_orbit + omega_bars[:, None]
    cl, sl = math.cos(latitude), math.sin(latitude)
    cphi, sphi = math.cos(spec.inclination), math.sin(spec.inclination)
    a = cl * np.cos(t)
    b = -cl * cphi * np.sin(t)
    sw = np.sin(w)
    out = a[:, :, None] * np.cos(w)[:, None, :]
    out += b[:, :, None] * sw[:, None, :]
    out += (sl * sphi) * sw[:, None, :]
    np.clip(out, -1.0, 1.0, out=out)
    return out
