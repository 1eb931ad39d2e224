"""Radio-link primitives: two-level antenna gain, power-law path loss,
unit-mean fading models and thermal noise."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

BOLTZMANN = 1.380649e-23


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinkBudget:
    """Downlink parameters in linear SI units.

    ``ref_power`` is the isotropic received power at 1 m from a satellite,
    in watts. ``min_elevation`` (radians) is provenance only; the gain cutoff
    is always taken from ``gain_cutoff``.
    """

    ref_power: float
    tx_gain: float
    rx_gain: float
    gain_cutoff: float
    pathloss_exponent: float = 2.0
    noise_power: float = 0.0
    min_elevation: float | None = None

    def __post_init__(self):
        problems = budget_violations(
            self.ref_power, self.tx_gain, self.rx_gain, self.gain_cutoff, self.pathloss_exponent, self.noise_power
        )
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_db(
        cls,
        ref_power_dbw,
        tx_gain_dbi,
        rx_gain_dbi,
        gain_cutoff,
        pathloss_exponent=2.0,
        noise_power=0.0,
        min_elevation=None,
    ):
        return cls(
            ref_power=float(db_to_linear(ref_power_dbw)),
            tx_gain=float(db_to_linear(tx_gain_dbi)),
            rx_gain=float(db_to_linear(rx_gain_dbi)),
            gain_cutoff=gain_cutoff,
            pathloss_exponent=pathloss_exponent,
            noise_power=noise_power,
            min_elevation=min_elevation,
        )

    def cutoff_cos(self, orbit_radius, earth_radius):
        """Central-angle cosine at which the main-lobe gain switches off."""
        r, e, d = orbit_radius, earth_radius, self.gain_cutoff
        return (r * r + e * e - d * d) / (2.0 * r * e)


def budget_violations(ref_power, tx_gain, rx_gain, gain_cutoff, pathloss_exponent, noise_power):
    out = []
    if not ref_power > 0:
        out.append(f"ref_power must be positive (got {ref_power!r})")
    if not tx_gain >= 1:
        out.append(f"tx_gain must be >= 1 in linear units (got {tx_gain!r})")
    if not rx_gain > 0:
        out.append(f"rx_gain must be positive (got {rx_gain!r})")
    if not gain_cutoff > 0:
        out.append(f"gain_cutoff must be positive (got {gain_cutoff!r})")
    if not pathloss_exponent >= 2:
        out.append(f"pathloss_exponent must be >= 2 (got {pathloss_exponent!r})")
    if not noise_power >= 0:
        out.append(f"noise_power must be >= 0 (got {noise_power!r})")
    return out


def antenna_gain(d, budget: LinkBudget):
    """``g_t * g_r`` inside the cutoff distance (inclusive), ``g_r`` beyond it."""
    d = np.asarray(d, dtype=float)
    g = np.where(d <= budget.gain_cutoff, budget.tx_gain * budget.rx_gain, budget.rx_gain)
    return float(g) if g.ndim == 0 else g


def mean_rx_power(d, budget: LinkBudget):
    """Fading-averaged received power ``p G(d) d^-alpha`` in watts."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 1.0):
        raise ValueError("path loss model needs a link distance above 1 m")
    out = budget.ref_power * antenna_gain(d, budget) * d ** (-budget.pathloss_exponent)
    return float(out) if np.ndim(out) == 0 else out


def noise_from_temperature(temperature, noise_figure_db, bandwidth):
    """Thermal noise power ``k_B T B F`` in watts."""
    return BOLTZMANN * temperature * bandwidth * 10.0 ** (noise_figure_db / 10.0)


class FadingModel(ABC):
    """Unit-mean power fading ``H``.

    Subclasses provide the CCDF, the Laplace transform and an inverse-CDF
    transform from uniforms, which lets counter-based streams drive the
    sampler.
    """

    name = "fading"

    @abstractmethod
    def ccdf(self, x):
        """P(H > x)."""

    @abstractmethod
    def laplace(self, s):
        """E[exp(-s H)]."""

    @abstractmethod
    def from_uniform(self, u):
        """Map uniforms in [0, 1) to fading variates."""

    def log_laplace(self, s):
        return np.log(self.laplace(s))

    def sample(self, rng: np.random.Generator, size=None):
        return self.from_uniform(rng.random(size))


class RayleighFading(FadingModel):
    """Exponential power fading, the Rayleigh amplitude case."""

    name = "rayleigh"

    def ccdf(self, x):
        return np.exp(-np.asarray(x, dtype=float))

    def laplace(self, s):
        return 1.0 / (1.0 + np.asarray(s, dtype=float))

    def log_laplace(self, s):
        return -np.log1p(np.asarray(s, dtype=float))

    def from_uniform(self, u):
        return -np.log1p(-np.asarray(u, dtype=float))


class DeterministicFading(FadingModel):
    """``H = 1`` surely; strips fading out of oracle comparisons."""

    name = "deterministic"

    def ccdf(self, x):
        return np.where(np.asarray(x, dtype=float) < 1.0, 1.0, 0.0)

    def laplace(self, s):
        return np.exp(-np.asarray(s, dtype=float))

    def log_laplace(self, s):
        return -np.asarray(s, dtype=float)

    def from_uniform(self, u):
        return np.ones_like(np.asarray(u, dtype=float))


def rayleigh_fading() -> RayleighFading:
    return RayleighFading()


def deterministic_fading() -> DeterministicFading:
    return DeterministicFading()


FADING_MODELS = {"rayleigh": RayleighFading, "deterministic": DeterministicFading}


def fading_by_name(name):
    try:
        return FADING_MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown fading model {name!r}; expected one of {sorted(FADING_MODELS)}") from None

