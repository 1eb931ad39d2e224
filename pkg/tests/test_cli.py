import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from walker_sg import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FIG2 = """\
experiment: snapshot
constellation:
  n_orbits: 20
  sats_per_orbit: 20
  inclination_deg: 33
  orbit_radius_km: 7000
snapshot: {theta_bar_deg: 1.0, omega_bar_deg: 2.0}
"""

CCDF = """\
experiment: distance-ccdf
constellation:
  n_orbits: 20
  sats_per_orbit: 20
  inclination_deg: 33
  orbit_radius_km: 6921
  earth_radius_km: 6370
user_latitudes_deg: [15]
distance_km: {start: 551, stop: 2728, points: 40}
quadrature: {n_theta: 128, n_omega: 128}
samples: 20000
seed: 3
"""

COVERAGE = """\
experiment: coverage
constellation:
  n_orbits: 25
  sats_per_orbit: 30
  inclination_deg: 33
  orbit_radius_km: 6921
  earth_radius_km: 6370
link:
  ref_power_dbw: 20
  tx_gain_dbi: 30
  rx_gain_dbi: 0
  gain_cutoff_km: 946
  noise: {temperature_k: 300, noise_figure_db: 7, bandwidth_mhz: 10}
user_latitudes_deg: [15]
sinr_thresholds_db: [-10, -5, 0, 5, 10]
quadrature: {n_theta: 64, n_omega: 64}
samples: 2000
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_snapshot_fig2(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, FIG2)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "snapshot.csv")
    assert header == ["i", "j", "x_km", "y_km", "z_km"]
    assert rows.shape == (400, 5)
    np.testing.assert_allclose(np.linalg.norm(rows[:, 2:], axis=1), 7000.0, rtol=1e-12)
    assert b"\r\n" not in (out / "snapshot.csv").read_bytes()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["constellation"]["n_orbits"] == 20
    assert manifest["seed"] == 0 and manifest["outputs"] == ["snapshot.csv"]
    assert {"version", "wall_clock_s", "threads"} <= manifest.keys()
    assert not list(out.glob(".*tmp"))


def test_distance_ccdf_columns_agree(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, CCDF)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "distance_ccdf_lat15.csv")
    assert header == ["d_km", "analytic", "empirical", "half_width"]
    assert np.all(np.isfinite(rows))
    assert np.max(np.abs(rows[:, 1] - rows[:, 2])) <= 0.02


def test_coverage_monotone(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, COVERAGE)), "--out", str(out)]) == 0
    _, rows = read_csv(out / "coverage_lat15.csv")
    assert rows[:, 0].tolist() == [-10, -5, 0, 5, 10]
    assert np.all(np.diff(rows[:, 1]) <= 0)


def test_byte_identical_across_threads(tmp_path):
    cfg = write(tmp_path, CCDF)
    outputs = []
    for n in (1, 4, 8):
        out = tmp_path / f"t{n}"
        assert cli.main(["run", str(cfg), "--out", str(out), "--threads", str(n)]) == 0
        outputs.append((out / "distance_ccdf_lat15.csv").read_bytes())
    assert len(set(outputs)) == 1


def test_seed_override(tmp_path):
    cfg = write(tmp_path, CCDF)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "11"])
    cli.main(["run", str(cfg), "--out", str(tmp_path / "b")])
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 11 and manifest["config"]["seed"] == 11
    assert (tmp_path / "a" / "distance_ccdf_lat15.csv").read_bytes() != (tmp_path / "b" / "distance_ccdf_lat15.csv").read_bytes()


def test_critical_distance_labels_no_coverage(tmp_path):
    text = CCDF.replace("distance-ccdf", "critical-distance").replace("n_orbits: 20", "n_orbits: 2").replace(
        "sats_per_orbit: 20", "sats_per_orbit: 3"
    )
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "critical_distance.csv")
    assert header[-2:] == ["analytic_no_coverage", "empirical_no_coverage_fraction"]
    assert rows[0, 4] == 1 and 0 < rows[0, 5] < 1
    assert np.all(np.isfinite(rows))


def test_ergodicity_labels_coverage_holes(tmp_path, capsys):
    text = CCDF.replace("distance-ccdf", "ergodicity").replace("n_orbits: 20", "n_orbits: 2").replace(
        "sats_per_orbit: 20", "sats_per_orbit: 3"
    )
    text += "ergodicity: {horizon_s: 1000}\n"
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "ergodicity.csv")
    assert rows[0, header.index("coverage_holes")] == 1
    assert "coverage holes" in capsys.readouterr().err


def test_validate_reports_all_violations(tmp_path, capsys):
    spin = 2 * math.pi / 86164
    text = FIG2.replace("n_orbits: 20", "n_orbits: 0").replace("orbit_radius_km: 7000", "orbit_radius_km: 6000")
    text += f"speeds:\n  earth_spin_rad_s: {spin!r}\n  satellite_rate_rad_s: {13 * spin!r}\n  ratio: 1/14\n"
    assert cli.main(["validate", str(write(tmp_path, text))]) == 1
    out = capsys.readouterr().out
    assert "constellation.n_orbits" in out
    assert "orbit below Earth surface" in out
    assert "speeds.ratio" in out and "inconsistent" in out


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", str(write(tmp_path, FIG2))]) == 0
    assert "ok" in capsys.readouterr().out


def test_run_invalid_config_fails_without_output(tmp_path, capsys):
    bad = write(tmp_path, FIG2.replace("7000", "6000"))
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "out")]) != 0
    assert "orbit below Earth surface" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_missing_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) != 0


def test_bad_thread_count(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["run", str(write(tmp_path, FIG2)), "--out", str(tmp_path / "o"), "--threads", "0"])


def test_non_finite_values_refused():
    with pytest.raises(ValueError):
        cli.csv_text(["x"], [(math.inf,)])


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    assert cli.config.validate(path) == []
