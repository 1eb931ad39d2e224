"""Torus quadrature of the nearest-distance, interference and coverage laws.

Every quantity is an average over the offset torus
``[0, 2 pi / N_o) x [0, 2 pi / N_s)`` of a function of one realization.
The integrands carry indicator discontinuities, so a tensor midpoint rule
is used and refined by doubling until successive values agree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from walker_sg import rng
from walker_sg._parallel import chunk_for, map_chunks
from walker_sg.geometry import ConstellationSpec, UserGeometry, cos_angles_batch, cos_kappa_to_distance
from walker_sg.link import FadingModel, LinkBudget, RayleighFading

log = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 256
MAX_GRID_SIZE = 1024
CONVERGENCE_TOL = 1e-3


@dataclass(frozen=True)
class QuadratureGrid:
    n_theta: int = DEFAULT_GRID_SIZE
    n_omega: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.n_theta < 2 or self.n_omega < 2:
            raise ValueError("quadrature grid needs at least 2 points per axis")

    @property
    def n_cells(self):
        return self.n_theta * self.n_omega

    def refined(self):
        return QuadratureGrid(2 * self.n_theta, 2 * self.n_omega)

    def nodes(self, spec: ConstellationSpec):
        """Midpoints ``(theta_bars, omega_bars)`` flattened theta-major."""
        th = (np.arange(self.n_theta) + 0.5) * (spec.theta_interval / self.n_theta)
        om = (np.arange(self.n_omega) + 0.5) * (spec.omega_interval / self.n_omega)
        return np.repeat(th, self.n_omega), np.tile(om, self.n_theta)


@dataclass(frozen=True)
class CoverageQuery:
    sinr_threshold: float
    fading_draws: int = 1000

    def __post_init__(self):
        if not self.sinr_threshold > 0:
            raise ValueError("sinr_threshold must be positive")
        if self.fading_draws < 1:
            raise ValueError("fading_draws must be >= 1")


class Converged(NamedTuple):
    value: object
    grid: QuadratureGrid
    converged: bool
    delta: float


def converge(
    evaluate: Callable[[QuadratureGrid], object],
    start: QuadratureGrid | None = None,
    tol=CONVERGENCE_TOL,
    max_size=MAX_GRID_SIZE,
) -> Converged:
    """Double the grid until two successive results differ by less than ``tol``.

    The difference is the sup-norm over the (possibly array-valued) result.
    Stops at ``max_size`` points per axis and reports ``converged=False``.
    """
    grid = start or QuadratureGrid()
    prev = np.asarray(evaluate(grid), dtype=float)
    delta = math.inf
    while max(grid.n_theta, grid.n_omega) * 2 <= max_size:
        grid = grid.refined()
        cur = np.asarray(evaluate(grid), dtype=float)
        delta = float(np.max(np.abs(cur - prev))) if cur.size else 0.0
        prev = cur
        if delta < tol:
            return Converged(_unwrap(cur), grid, True, delta)
    log.warning("quadrature not converged at %dx%d (delta=%.3g)", grid.n_theta, grid.n_omega, delta)
    return Converged(_unwrap(prev), grid, False, delta)


def _unwrap(a):
    return float(a) if np.ndim(a) == 0 else a


def _cell_map(spec, user, grid, fn, per_cell=1, threads=None, budget=4_000_000):
    """Evaluate ``fn(cos, start, stop)`` over chunks of torus cells.

    ``cos`` has shape ``(K, N_o * N_s)``; ``fn`` returns ``K`` rows.
    """
    th, om = grid.nodes(spec)

    def block(start, stop):
        cos = cos_angles_batch(spec, user.latitude, th[start:stop], om[start:stop], user.longitude)
        return fn(cos.reshape(stop - start, -1), start, stop)

    size = chunk_for(spec.n_satellites * per_cell, budget)
    return map_chunks(block, grid.n_cells, size, threads)


def _link_terms(cos, spec: ConstellationSpec, budget: LinkBudget):
    """Visibility mask and fading-averaged received power per satellite."""
    r, e = spec.orbit_radius, spec.earth_radius
    visible = cos >= spec.visibility_cos
    d2 = r * r + e * e - 2.0 * r * e * cos
    gain = np.where(
        cos >= budget.cutoff_cos(r, e), budget.tx_gain * budget.rx_gain, budget.rx_gain
    )
    power = budget.ref_power * gain * d2 ** (-0.5 * budget.pathloss_exponent)
    return visible, power


# -- nearest satellite distance ------------------------------------------------


def nearest_cos(spec, user, grid, threads=None):
    """Largest user-satellite central-angle cosine in each torus cell."""
    return _cell_map(spec, user, grid, lambda cos, a, b: cos.max(axis=1), threads=threads)


def nearest_distances(spec, user, grid, threads=None):
    """Nearest visible-satellite distance per cell; ``inf`` where none is visible."""
    best = nearest_cos(spec, user, grid, threads)
    d = cos_kappa_to_distance(best, spec)
    return np.where(best >= spec.visibility_cos, d, np.inf)


def _ccdf_from_cos(best, spec, d):
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    r, e = spec.orbit_radius, spec.earth_radius
    out = np.empty(d.shape)
    no_vis = float(np.mean(best < spec.visibility_cos))
    for k, dk in enumerate(d):
        if dk <= r - e:
            out[k] = 1.0
        elif dk >= spec.max_visible_distance:
            out[k] = no_vis
        else:
            c = (r * r + e * e - dk * dk) / (2.0 * r * e)
            out[k] = np.mean(c > best)
    return out


def distance_ccdf(spec, user, d, grid: QuadratureGrid | None = None, threads=None):
    """P(D > d) for the distance D from the user to its nearest visible satellite.

    Below ``r - e`` the value is 1; from the horizon distance
    ``sqrt(r^2 - e^2)`` upward it is the probability that no satellite is
    visible (``D = inf`` there). ``d`` may be a scalar or an array. With
    ``grid=None`` the grid is refined until converged.
    """
    if grid is None:
        return converge(lambda g: distance_ccdf(spec, user, d, g, threads)).value
    out = _ccdf_from_cos(nearest_cos(spec, user, grid, threads), spec, d)
    return float(out[0]) if np.ndim(d) == 0 else out


class NearestDistanceMean(NamedTuple):
    mean: float
    no_visibility: float


def expected_nearest_distance(spec, user, grid: QuadratureGrid | None = None, threads=None):
    """Mean nearest distance from the quadrature CCDF.

    Integrates ``r - e + int CCDF`` over ``[r - e, sqrt(r^2 - e^2)]``. The
    grid CCDF is a step function, so the integral is exact: it is the cell
    average of ``min(D, sqrt(r^2 - e^2))``. Mass at ``D = inf`` is returned
    separately as ``no_visibility``; the mean is finite only when that is 0.
    """
    if grid is None:
        scale = spec.min_distance

        def evaluate(g):
            m = expected_nearest_distance(spec, user, g, threads)
            return [m.mean / scale, m.no_visibility]

        res = converge(evaluate)
        return NearestDistanceMean(float(res.value[0] * scale), float(res.value[1]))
    d = nearest_distances(spec, user, grid, threads)
    finite = np.isfinite(d)
    capped = np.where(finite, d, spec.max_visible_distance)
    return NearestDistanceMean(float(np.mean(capped)), float(1.0 - np.mean(finite)))


def critical_distance(
    spec,
    user,
    grid: QuadratureGrid | None = None,
    refine_tolerance=100.0,
    threads=None,
    points_per_axis=17,
):
    """Largest nearest-satellite distance over all offset pairs.

    A coarse grid scan is followed by zoom refinement of every cell that
    could still hold the maximum. The nearest distance is Lipschitz in the
    offsets with constant ``r`` per radian, so a cell whose midpoint value is
    more than ``r * (half cell diagonal in L1)`` below the coarse maximum
    cannot contain it. Returns ``sqrt(r^2 - e^2)`` when some offset pair
    leaves the user without a visible satellite.
    """
    grid = grid or QuadratureGrid()
    r = spec.orbit_radius
    th, om = grid.nodes(spec)
    best = nearest_cos(spec, user, grid, threads)
    if np.any(best < spec.visibility_cos):
        return spec.max_visible_distance
    h_th = spec.theta_interval / grid.n_theta / 2.0
    h_om = spec.omega_interval / grid.n_omega / 2.0
    dist = cos_kappa_to_distance(best, spec)
    slack = r * (h_th + h_om)
    candidates = np.flatnonzero(dist >= dist.max() - slack)
    worst_cos = float(best.min())
    for c in candidates:
        worst_cos = min(
            worst_cos,
            _refine_min_cos(spec, user, th[c], om[c], h_th, h_om, refine_tolerance, points_per_axis),
        )
    if worst_cos < spec.visibility_cos:
        return spec.max_visible_distance
    return float(cos_kappa_to_distance(worst_cos, spec))


def _refine_min_cos(spec, user, th0, om0, h_th, h_om, tol, n):
    """Minimize the nearest-satellite cosine inside a box by repeated zooming."""
    r = spec.orbit_radius
    ct, co = th0, om0
    ht, ho = 1.2 * h_th, 1.2 * h_om
    best = math.inf
    while True:
        ts = ct + np.linspace(-ht, ht, n)
        ws = co + np.linspace(-ho, ho, n)
        tt, ww = np.repeat(ts, n), np.tile(ws, n)
        vals = cos_angles_batch(spec, user.latitude, tt, ww, user.longitude)
        vals = vals.reshape(len(tt), -1).max(axis=1)
        k = int(np.argmin(vals))
        best = min(best, float(vals[k]))
        ct, co = tt[k], ww[k]
        step_t, step_o = 2 * ht / (n - 1), 2 * ho / (n - 1)
        if r * (step_t + step_o) < tol:
            return best
        ht, ho = 2 * step_t, 2 * step_o


# -- interference -----------------------------------------------------------------


def interference_laplace(
    spec,
    budget: LinkBudget,
    fading: FadingModel,
    user,
    s,
    grid: QuadratureGrid | None = None,
    threads=None,
):
    """Laplace transform E[exp(-s T)] of the total received power T.

    Per cell the transform is the product over visible satellites of
    ``L_H(s * mean power)``, computed as the exponential of a sum of logs.
    """
    if grid is None:
        return converge(lambda g: interference_laplace(spec, budget, fading, user, s, g, threads)).value
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise ValueError("s must be non-negative")

    def fn(cos, a, b):
        visible, power = _link_terms(cos, spec, budget)
        out = np.empty((len(cos), len(s_arr)))
        for k, sk in enumerate(s_arr):
            terms = np.where(visible, fading.log_laplace(sk * power), 0.0)
            out[:, k] = np.exp(terms.sum(axis=1))
        return out

    vals = _cell_map(spec, user, grid, fn, per_cell=2, threads=threads)
    res = vals.mean(axis=0)
    return float(res[0]) if np.ndim(s) == 0 else res


def mean_interference(spec, budget: LinkBudget, user, grid: QuadratureGrid | None = None, form="sum", threads=None):
    """Mean total received power from all visible satellites, in watts.

    ``form="sum"`` is the expectation by linearity (unit-mean fading).
    ``form="product"`` evaluates the exponential of summed log mean powers,
    i.e. the product of per-satellite mean powers; it is kept for
    comparison and is not a mean of T.
    """
    if form not in ("sum", "product"):
        raise ValueError("form must be 'sum' or 'product'")
    if grid is None:
        # relative convergence: the scale of T spans many decades
        scale = budget.ref_power * budget.tx_gain * budget.rx_gain * spec.min_distance ** -budget.pathloss_exponent
        res = converge(lambda g: mean_interference(spec, budget, user, g, form, threads) / scale)
        return float(res.value * scale)

    def fn(cos, a, b):
        visible, power = _link_terms(cos, spec, budget)
        if form == "sum":
            return np.where(visible, power, 0.0).sum(axis=1)
        return np.exp(np.where(visible, np.log(power), 0.0).sum(axis=1))

    return float(np.mean(_cell_map(spec, user, grid, fn, threads=threads)))


# -- coverage -------------------------------------------------------------------------


def _serving_terms(cos, spec, budget):
    """Serving index, coverage flag, serving mean power and interferer mask."""
    visible, power = _link_terms(cos, spec, budget)
    star = np.argmax(cos, axis=1)
    rows = np.arange(len(cos))
    covered = visible[rows, star]
    interferers = visible.copy()
    interferers[rows, star] = False
    return star, covered, power[rows, star], power, interferers


def coverage_curve(
    spec,
    budget: LinkBudget,
    fading: FadingModel,
    user,
    taus,
    grid: QuadratureGrid | None = None,
    fading_draws=1000,
    seed=0,
    closed_form=None,
    threads=None,
):
    """Coverage probability P(SINR > tau) for each threshold in ``taus``.

    The user is served by the nearest visible satellite; every other
    visible satellite interferes. Per cell the conditional coverage is
    ``E[Fbar_H(a (sigma^2 + sum_k b_k H_k))]`` with
    ``a = tau / (serving mean power)``. For Rayleigh fading this is
    ``exp(-a sigma^2) prod_k 1 / (1 + a b_k)`` (``closed_form`` defaults to
    True there); otherwise ``fading_draws`` counter-based draws per cell are
    averaged. Cells with no visible satellite contribute 0.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0):
        raise ValueError("SINR thresholds must be positive")
    if closed_form is None:
        closed_form = isinstance(fading, RayleighFading)
    if closed_form and not isinstance(fading, RayleighFading):
        raise ValueError("closed-form inner expectation is only available for Rayleigh fading")
    if grid is None:
        return converge(
            lambda g: coverage_curve(spec, budget, fading, user, taus, g, fading_draws, seed, closed_form, threads)
        ).value
    noise = budget.noise_power

    def rayleigh(cos, a, b):
        star, covered, p_star, power, interf = _serving_terms(cos, spec, budget)
        out = np.zeros((len(cos), len(taus)))
        for k, tau in enumerate(taus):
            scale = tau / p_star
            logj = -scale * noise - np.where(interf, np.log1p(scale[:, None] * power), 0.0).sum(axis=1)
            out[:, k] = np.where(covered, np.exp(logj), 0.0)
        return out

    n_sat = spec.n_satellites

    def monte_carlo(cos, a, b):
        star, covered, p_star, power, interf = _serving_terms(cos, spec, budget)
        n_int = interf.sum(axis=1)
        width = max(int(n_int.max()), 1)
        # interferer satellite indices packed to the left, padding marked by n_sat
        order = np.argsort(~interf, axis=1, kind="stable")[:, :width]
        valid = np.arange(width)[None, :] < n_int[:, None]
        sat_idx = np.where(valid, order, n_sat)
        b_k = np.where(valid, np.take_along_axis(power, order, axis=1), 0.0)
        cells = np.arange(a, b)
        draws = np.arange(fading_draws)
        u = rng.uniform(seed, rng.STREAM_QUADRATURE, cells[:, None, None], draws[None, :, None], sat_idx[:, None, :])
        h = fading.from_uniform(u)
        total = np.einsum("kmj,kj->km", h, b_k)
        out = np.zeros((len(cos), len(taus)))
        for k, tau in enumerate(taus):
            scale = (tau / p_star)[:, None]
            j = np.mean(fading.ccdf(scale * (noise + total)), axis=1)
            out[:, k] = np.where(covered, j, 0.0)
        return out

    if closed_form:
        vals = _cell_map(spec, user, grid, rayleigh, per_cell=3, threads=threads)
    else:
        # the draw tensor is K x draws x width; keep K small
        vals = _cell_map(
            spec, user, grid, monte_carlo, per_cell=max(fading_draws // 8, 3), threads=threads, budget=2_000_000
        )
    return vals.mean(axis=0)


def coverage_probability(
    spec,
    budget: LinkBudget,
    fading: FadingModel,
    user,
    query: CoverageQuery,
    grid: QuadratureGrid | None = None,
    seed=0,
    closed_form=None,
    threads=None,
):
    curve = coverage_curve(
        spec, budget, fading, user, [query.sinr_threshold], grid, query.fading_draws, seed, closed_form, threads
    )
    return float(np.asarray(curve)[0])
