"""Experiment configuration files.

A config is a YAML mapping. Lengths are given in km and angles in degrees;
everything is converted to meters and radians on load. Each problem is
reported as ``file:line: field: message``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from walker_sg import dynamics, geometry, link
from walker_sg.analysis import QuadratureGrid
from walker_sg.dynamics import AngularSpeeds
from walker_sg.geometry import ConstellationSpec, OffsetPair
from walker_sg.link import FadingModel, LinkBudget

EXPERIMENTS = ("distance-ccdf", "critical-distance", "interference", "coverage", "ergodicity", "snapshot")

_TOP_KEYS = {
    "experiment", "constellation", "link", "fading", "user_latitudes_deg", "speeds", "snapshot",
    "distance_km", "sinr_thresholds_db", "laplace_s", "quadrature", "samples", "seed", "confidence",
    "fading_draws", "critical", "ergodicity",
}
_SECTION_KEYS = {
    "constellation": {"n_orbits", "sats_per_orbit", "inclination_deg", "orbit_radius_km", "altitude_km", "earth_radius_km"},
    "link": {
        "ref_power_dbw", "tx_gain_dbi", "rx_gain_dbi", "gain_cutoff_km", "min_elevation_deg",
        "pathloss_exponent", "noise_power_dbw", "noise",
    },
    "noise": {"temperature_k", "noise_figure_db", "bandwidth_mhz"},
    "speeds": {"earth_spin_rad_s", "satellite_rate_rad_s", "ratio"},
    "snapshot": {"theta_bar_deg", "omega_bar_deg"},
    "distance_km": {"start", "stop", "points"},
    "quadrature": {"n_theta", "n_omega", "converge"},
    "critical": {"refine_tolerance_m"},
    "ergodicity": {"horizon_s", "step_s", "tolerance", "initial_theta_bar_deg", "initial_omega_bar_deg"},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e7`` and ``1.0e12`` as floats, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class ExperimentConfig:
    experiment: str
    constellation: ConstellationSpec
    budget: LinkBudget | None
    fading: FadingModel
    latitudes: list
    speeds: AngularSpeeds | None
    offsets: OffsetPair
    distances: list
    taus_db: list
    laplace_s: list
    grid: QuadratureGrid | None
    samples: int
    seed: int
    confidence: float
    fading_draws: int
    refine_tolerance: float
    horizon: float
    step: float | None
    tolerance: float
    initial: OffsetPair | None
    resolved: dict = field(default_factory=dict)


def _line_map(text):
    """Map every key path in the YAML document to its 1-based line number."""
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                lines[path + (k.value,)] = k.start_mark.line + 1
                walk(v, path + (k.value,))
                lines[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=_Loader)
    if root is not None:
        walk(root, ())
    return lines


class _Reader:
    def __init__(self, data, lines, filename):
        self.data = data
        self.lines = lines
        self.filename = filename
        self.problems = []
        self.resolved = {}

    def error(self, path, message):
        # a missing field has no line of its own; report its nearest present parent
        anchor = tuple(path)
        line = self.lines.get(anchor)
        while line is None and anchor:
            anchor = anchor[:-1]
            line = self.lines.get(anchor)
        where = f"{self.filename}:{line or 1}"
        name = ".".join(str(p) for p in path) or "<root>"
        self.problems.append(f"{where}: {name}: {message}")

    def raw(self, path):
        node = self.data
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return None
            node = node[p]
        return node

    def _store(self, path, value):
        node = self.resolved
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value

    def number(self, *path, default=None, required=False, check=None, what=""):
        value = self.raw(path)
        if value is None:
            if required:
                self.error(list(path), "missing required field")
            if default is not None:
                self._store(path, default)
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(list(path), f"expected a number, got {value!r}")
            return default
        value = float(value)
        if not math.isfinite(value):
            self.error(list(path), "must be finite")
            return default
        if check is not None and not check(value):
            self.error(list(path), f"{what} (got {value!r})")
        self._store(path, value)
        return value

    def integer(self, *path, default=None, required=False, minimum=None):
        value = self.raw(path)
        if value is None:
            if required:
                self.error(list(path), "missing required field")
            if default is not None:
                self._store(path, default)
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(list(path), f"expected an integer, got {value!r}")
            return default
        if minimum is not None and value < minimum:
            self.error(list(path), f"must be >= {minimum} (got {value})")
        self._store(path, value)
        return value

    def numbers(self, *path, default=None):
        value = self.raw(path)
        if value is None:
            if default is not None:
                self._store(path, list(default))
            return list(default or [])
        if not isinstance(value, list) or not value:
            self.error(list(path), "expected a non-empty list of numbers")
            return list(default or [])
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                self.error(list(path) + [i], f"expected a finite number, got {v!r}")
            else:
                out.append(float(v))
        self._store(path, out)
        return out

    def unknown_keys(self, path, allowed):
        node = self.raw(path) if path else self.data
        if node is None:
            return
        if not isinstance(node, dict):
            self.error(list(path), "expected a mapping")
            return
        for key in node:
            if key not in allowed:
                self.error(list(path) + [key], "unknown field")


def _parse_ratio(value):
    if value is None or (isinstance(value, str) and value.strip().lower() == "irrational"):
        return None
    if isinstance(value, bool):
        raise ValueError("ratio must be 'irrational' or 'p/q'")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError("ratio must be 'irrational' or 'p/q'")


def parse(text, filename="<config>"):
    """Parse config text; returns ``(ExperimentConfig or None, problems)``."""
    try:
        data = yaml.load(text, Loader=_Loader)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        return None, [f"{filename}:{line}: <root>: YAML parse error: {exc}"]
    if not isinstance(data, dict):
        return None, [f"{filename}:1: <root>: expected a mapping at top level"]
    rd = _Reader(data, lines, filename)
    rd.unknown_keys((), _TOP_KEYS)
    for section, keys in _SECTION_KEYS.items():
        path = ("link", "noise") if section == "noise" else (section,)
        rd.unknown_keys(path, keys)

    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        rd.error(["experiment"], f"expected one of {', '.join(EXPERIMENTS)} (got {experiment!r})")
    rd.resolved["experiment"] = experiment

    # constellation
    n_o = rd.integer("constellation", "n_orbits", required=True)
    n_s = rd.integer("constellation", "sats_per_orbit", required=True)
    inc = rd.number("constellation", "inclination_deg", required=True)
    e_km = rd.number("constellation", "earth_radius_km", default=geometry.EARTH_RADIUS / 1e3)
    r_km = rd.number("constellation", "orbit_radius_km")
    alt = rd.number("constellation", "altitude_km")
    if r_km is None and alt is not None and e_km is not None:
        r_km = e_km + alt
        rd._store(("constellation", "orbit_radius_km"), r_km)
    if r_km is None:
        rd.error(["constellation", "orbit_radius_km"], "missing required field (or give altitude_km)")
    spec = None
    if None not in (n_o, n_s, inc, r_km, e_km):
        keys = {
            "n_orbits": "n_orbits",
            "sats_per_orbit": "sats_per_orbit",
            "inclination": "inclination_deg",
            "orbit_radius": "orbit_radius_km",
            "earth_radius": "earth_radius_km",
        }
        problems = geometry.spec_violations(n_o, n_s, math.radians(inc), r_km * 1e3, e_km * 1e3)
        for name, msg in problems:
            rd.error(["constellation", keys[name]], msg)
        if not problems:
            spec = ConstellationSpec(n_o, n_s, math.radians(inc), r_km * 1e3, e_km * 1e3)

    # link
    budget = None
    needs_link = experiment in ("interference", "coverage")
    if rd.raw(("link",)) is not None or needs_link:
        p = rd.number("link", "ref_power_dbw", required=needs_link)
        gt = rd.number("link", "tx_gain_dbi", required=needs_link)
        gr = rd.number("link", "rx_gain_dbi", default=0.0)
        dg = rd.number("link", "gain_cutoff_km", required=needs_link, check=lambda v: v > 0, what="must be positive")
        eta = rd.number("link", "min_elevation_deg")
        alpha = rd.number("link", "pathloss_exponent", default=2.0, check=lambda v: v >= 2, what="must be >= 2")
        noise = 0.0
        if rd.raw(("link", "noise_power_dbw")) is not None and rd.raw(("link", "noise")) is not None:
            rd.error(["link", "noise"], "give either noise_power_dbw or noise, not both")
        if rd.raw(("link", "noise_power_dbw")) is not None:
            noise = float(link.db_to_linear(rd.number("link", "noise_power_dbw")))
        elif rd.raw(("link", "noise")) is not None:
            pos = lambda v: v > 0  # noqa: E731
            t = rd.number("link", "noise", "temperature_k", required=True, check=pos, what="must be positive")
            nf = rd.number("link", "noise", "noise_figure_db", default=0.0)
            bw = rd.number("link", "noise", "bandwidth_mhz", required=True, check=pos, what="must be positive")
            if None not in (t, nf, bw) and t > 0 and bw > 0:
                noise = link.noise_from_temperature(t, nf, bw * 1e6)
        if None not in (p, gt, gr, dg, alpha):
            problems = link.budget_violations(
                float(link.db_to_linear(p)), float(link.db_to_linear(gt)), float(link.db_to_linear(gr)),
                dg * 1e3, alpha, noise,
            )
            for msg in problems:
                rd.error(["link"], msg)
            if not problems:
                budget = LinkBudget.from_db(
                    p, gt, gr, dg * 1e3, alpha, noise, None if eta is None else math.radians(eta)
                )

    fading_name = data.get("fading", "rayleigh")
    rd.resolved["fading"] = fading_name
    try:
        fading = link.fading_by_name(fading_name)
    except ValueError as exc:
        rd.error(["fading"], str(exc))
        fading = link.RayleighFading()

    lats = rd.numbers("user_latitudes_deg", default=[15.0])
    for i, lat in enumerate(lats):
        if not -90.0 <= lat <= 90.0:
            rd.error(["user_latitudes_deg", i], f"latitude must lie in [-90, 90] (got {lat})")

    # speeds
    speeds = None
    if spec is not None or rd.raw(("speeds",)) is not None:
        default = AngularSpeeds.physical(spec.orbit_radius) if spec is not None else None
        v_t = rd.number("speeds", "earth_spin_rad_s", default=default.earth_spin if default else None)
        v_w = rd.number("speeds", "satellite_rate_rad_s", default=default.satellite_rate if default else None)
        ratio_raw = rd.raw(("speeds", "ratio"))
        try:
            ratio = _parse_ratio(ratio_raw)
        except (ValueError, ZeroDivisionError) as exc:
            rd.error(["speeds", "ratio"], f"{exc} (got {ratio_raw!r})")
            ratio = None
        rd._store(("speeds", "ratio"), "irrational" if ratio is None else str(ratio))
        if v_t is not None and v_w is not None:
            problems = dynamics.speeds_violations(v_t, v_w, ratio)
            for msg in problems:
                rd.error(["speeds", "ratio"] if "ratio" in msg else ["speeds"], msg)
            if not problems:
                speeds = AngularSpeeds(v_t, v_w, ratio)

    th0 = rd.number("snapshot", "theta_bar_deg", default=0.0)
    om0 = rd.number("snapshot", "omega_bar_deg", default=0.0)
    offsets = OffsetPair.reduced(spec, math.radians(th0), math.radians(om0)) if spec else OffsetPair(0.0, 0.0)

    distances = []
    if spec is not None:
        d0 = rd.number("distance_km", "start", default=round(spec.min_distance / 1e3, 6))
        d1 = rd.number("distance_km", "stop", default=round(spec.max_visible_distance / 1e3, 6))
        npts = rd.integer("distance_km", "points", default=50, minimum=2)
        if None not in (d0, d1, npts) and d0 >= 0 and d1 > d0 and npts >= 2:
            distances = [(d0 + (d1 - d0) * k / (npts - 1)) * 1e3 for k in range(npts)]
        elif d0 is not None and d1 is not None and not d1 > d0:
            rd.error(["distance_km", "stop"], "stop must exceed start")
    taus_db = rd.numbers("sinr_thresholds_db", default=[-10.0, -5.0, 0.0, 5.0, 10.0])
    laplace_s = rd.numbers("laplace_s", default=[])
    for i, s in enumerate(laplace_s):
        if s < 0:
            rd.error(["laplace_s", i], "s must be non-negative")

    grid = None
    if rd.raw(("quadrature",)) is not None:
        n_th = rd.integer("quadrature", "n_theta", default=256, minimum=2)
        n_om = rd.integer("quadrature", "n_omega", default=256, minimum=2)
        conv = rd.raw(("quadrature", "converge"))
        if conv is not None and not isinstance(conv, bool):
            rd.error(["quadrature", "converge"], "expected true or false")
        if not conv and n_th is not None and n_om is not None and n_th >= 2 and n_om >= 2:
            grid = QuadratureGrid(n_th, n_om)

    samples = rd.integer("samples", default=100_000, minimum=100)
    seed = rd.integer("seed", default=0, minimum=0)
    if isinstance(seed, int) and seed >= 2**64:
        rd.error(["seed"], "must fit in 64 bits")
    conf = rd.number("confidence", default=0.99, check=lambda v: 0 < v < 1, what="must lie in (0, 1)")
    draws = rd.integer("fading_draws", default=1000, minimum=1)
    tol_m = rd.number("critical", "refine_tolerance_m", default=100.0, check=lambda v: v > 0, what="must be positive")
    horizon = rd.number("ergodicity", "horizon_s", default=1e7, check=lambda v: v > 0, what="must be positive")
    step = rd.number("ergodicity", "step_s", check=lambda v: v > 0, what="must be positive")
    if step is not None and horizon is not None and step > horizon:
        rd.error(["ergodicity", "step_s"], "step must not exceed the horizon")
    tolerance = rd.number("ergodicity", "tolerance", default=0.02, check=lambda v: v > 0, what="must be positive")
    initial = None
    ith = rd.number("ergodicity", "initial_theta_bar_deg")
    iom = rd.number("ergodicity", "initial_omega_bar_deg")
    if spec is not None and (ith is not None or iom is not None):
        initial = OffsetPair.reduced(spec, math.radians(ith or 0.0), math.radians(iom or 0.0))

    if rd.problems:
        return None, rd.problems
    cfg = ExperimentConfig(
        experiment=experiment,
        constellation=spec,
        budget=budget,
        fading=fading,
        latitudes=[math.radians(v) for v in lats],
        speeds=speeds,
        offsets=offsets,
        distances=distances,
        taus_db=taus_db,
        laplace_s=laplace_s,
        grid=grid,
        samples=samples,
        seed=seed,
        confidence=conf,
        fading_draws=draws,
        refine_tolerance=tol_m,
        horizon=horizon,
        step=step,
        tolerance=tolerance,
        initial=initial,
        resolved=rd.resolved,
    )
    return cfg, []


def load(path):
    """Load and validate a config file; raises :class:`ConfigError` listing every problem."""
    path = Path(path)
    cfg, problems = parse(path.read_text(), str(path))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(path):
    """Every constraint violation in the file; an empty list means it can run."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        return [f"{path}: cannot read: {exc}"]
    return parse(text, str(path))[1]
