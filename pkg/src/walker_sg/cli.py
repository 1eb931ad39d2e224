"""Command-line front end.

    walker-sg run CONFIG --out DIR [--seed N] [--threads N]
    walker-sg validate CONFIG
    walker-sg --self-test
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

import walker_sg
from walker_sg import analysis, config, geometry, link, montecarlo
from walker_sg._parallel import THREADS_ENV, default_threads
from walker_sg.geometry import UserGeometry
from walker_sg.montecarlo import EnsembleConfig


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x!r}")
    return repr(x)


def _deg(rad):
    # undo the radian round trip so 15 degrees prints as 15.0
    return round(math.degrees(rad), 9)


def _lat_label(lat):
    return f"lat{_deg(lat):g}"


_UMASK = os.umask(0)
os.umask(_UMASK)


def write_atomic(path: Path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# -- experiments ---------------------------------------------------------------------
# each returns a list of (file name, header, rows)


def _ensemble(cfg):
    return EnsembleConfig(cfg.samples, cfg.seed, cfg.confidence)


def _snapshot(cfg, threads):
    spec = cfg.constellation
    sats = geometry.snapshot(spec, cfg.offsets)
    rows = []
    for i in range(1, spec.n_orbits + 1):
        for j in range(1, spec.sats_per_orbit + 1):
            x, y, z = sats[i, j] / 1e3
            rows.append((i, j, x, y, z))
    return [("snapshot.csv", ["i", "j", "x_km", "y_km", "z_km"], rows)]


def _distance_ccdf(cfg, threads):
    spec, ens = cfg.constellation, _ensemble(cfg)
    out = []
    for lat in cfg.latitudes:
        user = UserGeometry.typical(lat, spec)
        analytic = analysis.distance_ccdf(spec, user, cfg.distances, cfg.grid, threads)
        emp = montecarlo.empirical_distance_ccdf(spec, user, cfg.distances, ens, threads)
        rows = [(d / 1e3, a, e.value, e.half_width) for d, a, e in zip(cfg.distances, analytic, emp)]
        out.append((f"distance_ccdf_{_lat_label(lat)}.csv", ["d_km", "analytic", "empirical", "half_width"], rows))
    return out


def _critical_distance(cfg, threads):
    spec, ens = cfg.constellation, _ensemble(cfg)
    rows = []
    for lat in cfg.latitudes:
        user = UserGeometry.typical(lat, spec)
        dc = analysis.critical_distance(spec, user, cfg.grid, cfg.refine_tolerance, threads)
        d = montecarlo.empirical_nearest_distances(spec, user, ens, threads)
        finite = d[np.isfinite(d)]
        emp_max = float(finite.max()) if finite.size else spec.max_visible_distance
        holes = 1.0 - finite.size / d.size
        # the sample maximum has no confidence interval; its half-width column is 0
        rows.append((_deg(lat), dc / 1e3, emp_max / 1e3, 0.0, int(dc >= spec.max_visible_distance), holes))
    header = ["latitude_deg", "analytic_km", "empirical_km", "half_width_km", "analytic_no_coverage", "empirical_no_coverage_fraction"]
    return [("critical_distance.csv", header, rows)]


def _interference(cfg, threads):
    spec, ens, budget = cfg.constellation, _ensemble(cfg), cfg.budget
    out, rows = [], []
    for lat in cfg.latitudes:
        user = UserGeometry.typical(lat, spec)
        mean = analysis.mean_interference(spec, budget, user, cfg.grid, threads=threads)
        t = montecarlo.empirical_interference(spec, budget, cfg.fading, user, ens, threads)
        est = montecarlo.normal_mean(t, ens.z)
        rows.append((_deg(lat), mean, est.value, est.half_width))
        if cfg.laplace_s:
            lap = analysis.interference_laplace(spec, budget, cfg.fading, user, cfg.laplace_s, cfg.grid, threads)
            lrows = []
            for s, a in zip(cfg.laplace_s, lap):
                e = montecarlo.normal_mean(np.exp(-s * t), ens.z)
                lrows.append((s, a, e.value, e.half_width))
            out.append((f"laplace_{_lat_label(lat)}.csv", ["s_per_w", "analytic", "empirical", "half_width"], lrows))
    out.insert(0, ("mean_interference.csv", ["latitude_deg", "analytic_w", "empirical_w", "half_width_w"], rows))
    return out


def _coverage(cfg, threads):
    spec, ens, budget = cfg.constellation, _ensemble(cfg), cfg.budget
    taus = link.db_to_linear(cfg.taus_db)
    out = []
    for lat in cfg.latitudes:
        user = UserGeometry.typical(lat, spec)
        analytic = analysis.coverage_curve(
            spec, budget, cfg.fading, user, taus, cfg.grid, cfg.fading_draws, cfg.seed, threads=threads
        )
        emp = montecarlo.empirical_coverage(spec, budget, cfg.fading, user, taus, ens, threads)
        rows = [(tdb, a, e.value, e.half_width) for tdb, a, e in zip(cfg.taus_db, analytic, emp)]
        out.append((f"coverage_{_lat_label(lat)}.csv", ["tau_db", "analytic", "empirical", "half_width"], rows))
    return out


def _ergodicity(cfg, threads):
    spec, ens = cfg.constellation, _ensemble(cfg)
    periodic = int(cfg.speeds.is_rational)
    rows = []
    for lat in cfg.latitudes:
        user = UserGeometry.typical(lat, spec)
        try:
            rep = montecarlo.ergodicity_experiment(
                spec, cfg.speeds, user, cfg.horizon, cfg.step, ens, cfg.initial, cfg.grid, cfg.tolerance, threads
            )
        except ValueError as exc:
            print(f"latitude {_deg(lat):g} deg: {exc}", file=sys.stderr)
            rows.append((_deg(lat), 0.0, 0.0, 0.0, 0.0, periodic, 1, 0))
            continue
        rows.append(
            (
                _deg(lat),
                rep.analytic_value / 1e3,
                rep.empirical_value / 1e3,
                rep.half_width / 1e3,
                rep.relative_error,
                periodic,
                0,
                int(rep.passed),
            )
        )
    header = [
        "latitude_deg", "ensemble_mean_km", "time_average_km", "half_width_km",
        "relative_error", "periodic", "coverage_holes", "passed",
    ]
    return [("ergodicity.csv", header, rows)]


EXPERIMENTS = {
    "snapshot": _snapshot,
    "distance-ccdf": _distance_ccdf,
    "critical-distance": _critical_distance,
    "interference": _interference,
    "coverage": _coverage,
    "ergodicity": _ergodicity,
}


def run(config_path, out_dir, seed=None, threads=None):
    """Run one experiment config and write its CSVs plus ``manifest.json``."""
    start = time.time()
    try:
        cfg = config.load(config_path)
    except config.ConfigError as exc:
        for p in exc.problems:
            print(p, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{config_path}: cannot read: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        if not 0 <= seed < 2**64:
            print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
            return 2
        cfg = replace(cfg, seed=seed)
        cfg.resolved["seed"] = seed
    threads = default_threads() if threads is None else threads
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = EXPERIMENTS[cfg.experiment](cfg, threads)
    for name, header, rows in files:
        write_atomic(out / name, csv_text(header, rows))
    manifest = {
        "tool": "walker-sg",
        "version": walker_sg.__version__,
        "config_file": str(config_path),
        "config": cfg.resolved,
        "seed": cfg.seed,
        "threads": threads,
        "outputs": [name for name, _, _ in files],
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(start)),
        "wall_clock_s": round(time.time() - start, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def self_test(threads=None):
    from walker_sg import acceptance

    results = acceptance.run_all(threads=threads, echo=True)
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="walker-sg", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--self-test", action="store_true", help="run the acceptance suite and print a pass/fail table")
    parser.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    parser.add_argument("--version", action="version", version=f"walker-sg {walker_sg.__version__}")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None, dest="run_threads")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.self_test:
        return self_test(args.threads)
    if args.command == "run":
        threads = args.run_threads if args.run_threads is not None else args.threads
        if threads is not None and threads < 1:
            parser.error("--threads must be >= 1")
        return run(args.config, args.out, args.seed, threads)
    if args.command == "validate":
        problems = config.validate(args.config)
        for p in problems:
            print(p)
        if not problems:
            print(f"{args.config}: ok")
        return 1 if problems else 0
    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
