import csv
import json

import numpy as np
import pytest
import yaml

from birefsim import polarization as pol
from birefsim.atom import MHZ
from birefsim.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from birefsim.config import PRESETS, ConfigError, load_config, resolve, serialize
from birefsim.emission import routing_curve
from birefsim.runner import NumericFailure, run, sweep


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# configuration -------------------------------------------------------------

def test_empty_file_gives_experimental_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    s = load_config(p)
    cfg = s.system
    assert cfg.g == pytest.approx(4.77 * MHZ)
    assert cfg.kappa == pytest.approx(1.77 * MHZ)
    assert cfg.gamma == pytest.approx(3.03 * MHZ)
    assert cfg.delta_p == pytest.approx(3.471 * MHZ)
    assert cfg.cavity_orientation.degrees() == pytest.approx((0.888, 115.1, -40.1))
    assert cfg.scheme.name == "rb87_d2"


def test_negative_kappa_names_field(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("system:\n  kappa_mhz: -1.0\n")
    with pytest.raises(ConfigError, match=r"system\.kappa_mhz"):
        load_config(p)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match=r"system\.pulse\.colour"):
        resolve({"system": {"pulse": {"colour": "red"}}})


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        load_config("/nonexistent/config.yaml")


def test_fig4a_20mhz_preset():
    s = resolve(preset="fig4a_20MHz")
    cfg = s.system
    assert cfg.scheme.name == "three_level"
    assert cfg.cavity_orientation == pol.LINEAR
    assert cfg.delta_p == pytest.approx(20 * MHZ)
    assert cfg.pulse.peak_rabi == pytest.approx(2 * MHZ)
    assert cfg.pulse.duration == pytest.approx(1e-6)


def test_fig4b_presets_put_x_mode_on_raman_resonance():
    for name in ("fig4b_4MHz", "fig4b_20MHz"):
        cfg = resolve(preset=name).system
        w_x, _ = cfg.mode_frequencies
        assert w_x == pytest.approx(cfg.scheme.raman_frequency, abs=1e-6)


def test_overrides_and_preset_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("preset: fig3\nsystem:\n  g_mhz: 3.0\n")
    s = load_config(p, overrides=["system.pulse.duration_ns=200"])
    assert s.name == "fig3"
    assert s.system.g == pytest.approx(3 * MHZ)
    assert s.system.pulse.duration == pytest.approx(200e-9)
    with pytest.raises(ConfigError):
        load_config(p, overrides=["nonsense"])


@pytest.mark.parametrize("name", list(PRESETS))
def test_round_trip_idempotent(name):
    s = resolve(preset=name)
    once = serialize(s)
    twice = serialize(resolve(yaml.safe_load(once)))
    assert once == twice
    assert s.config_hash() == resolve(yaml.safe_load(once)).config_hash()


def test_hash_changes_with_config():
    assert resolve().config_hash() != resolve(overrides=["system.g_mhz=4.0"]).config_hash()


def test_sweep_validation():
    with pytest.raises(ConfigError, match="does not name"):
        resolve({"sweep": {"parameter": "system.bogus", "values": [1]}})
    with pytest.raises(ConfigError, match="sweep.values"):
        resolve({"sweep": {"parameter": "system.g_mhz", "values": []}})
    with pytest.raises(ConfigError, match="peak_rabi"):
        resolve({"sweep": {"parameter": "system.g_mhz", "values": [1, 2],
                           "linked": {"system.pulse.peak_rabi_mhz": [1]}}})


def test_empty_routing_grid_rejected():
    with pytest.raises(ConfigError):
        resolve({"outputs": {"routing": {"angles_deg": []}}})


# runs ----------------------------------------------------------------------

def test_fig3_run_writes_three_wavepackets(tmp_path):
    m = run(resolve(preset="fig3"), tmp_path)
    packets = sorted(f for f in m.outputs if f.startswith("wavepacket_"))
    assert len(packets) == 3
    rows = read_csv(tmp_path / packets[0])
    assert rows[0] == ["time_ns", "flux_port1_per_ns", "flux_port2_per_ns"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scenario"] == "fig3" and manifest["config_hash"] == m.config_hash


def test_fig2c_run_writes_both_toggles(tmp_path):
    run(resolve(preset="fig2c", overrides=["outputs.routing.step_deg=30"]), tmp_path)
    for tag in ("on", "off"):
        rows = read_csv(tmp_path / f"routing_birefringence_{tag}.csv")
        assert rows[0] == ["qwp_angle_deg", "fraction_H", "fraction_V"]
        assert len(rows) == 1 + 7
        for _, h, v in rows[1:]:
            assert float(h) + float(v) == pytest.approx(1.0, abs=1e-9)


def test_rerun_is_byte_identical(tmp_path):
    s = resolve(preset="fig4a_4MHz", overrides=["outputs.wavepacket_qwp_deg=[0.0, 30.0]"])
    run(s, tmp_path / "a")
    run(s, tmp_path / "b")
    for f in sorted((tmp_path / "a").glob("*.csv")):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_numeric_failure_carries_scenario(tmp_path):
    s = resolve(preset="fig4a_0MHz", overrides=["outputs.oscillation={basis: linear}"])
    with pytest.raises(NumericFailure, match="fig4a_0MHz"):
        run(s, tmp_path)


# sweeps --------------------------------------------------------------------

def _sweep_rows(path):
    rows = read_csv(path / "sweep_summary.csv")
    return [dict(zip(rows[0], r)) for r in rows[1:]]


def test_fig4a_sweep_flips_polarisation(tmp_path):
    m = sweep(resolve(preset="fig4a_sweep"), tmp_path)
    assert m.status == "ok"
    rows = _sweep_rows(tmp_path)
    eta = [float(r["efficiency"]) for r in rows]
    assert [r["dominant_polarization"] for r in rows] == ["-", "-", "+"]
    # both small splittings emit with near-unit efficiency; 20 MHz is clearly lower
    assert eta[2] < min(eta[:2]) - 0.2
    assert float(rows[2]["dominant_fraction"]) > 0.75


def test_sweep_independent_of_parallelism(tmp_path):
    s = resolve(preset="fig4a_sweep")
    sweep(s, tmp_path / "one", workers=1)
    sweep(s, tmp_path / "two", workers=2)
    a = (tmp_path / "one" / "sweep_summary.csv").read_bytes()
    assert a == (tmp_path / "two" / "sweep_summary.csv").read_bytes()


def test_single_value_sweep_equals_run(tmp_path):
    base = resolve(preset="fig4a_4MHz")
    swept = resolve(preset="fig4a_4MHz", overrides=["sweep={parameter: system.g_mhz, values: [4.0]}"])
    run(base, tmp_path / "run")
    sweep(swept, tmp_path / "sweep")
    for f in ("summary.csv", "basis_fluxes.csv"):
        assert (tmp_path / "run" / f).read_bytes() == (tmp_path / "sweep" / "run_000" / f).read_bytes()


def test_qwp_sweep_reproduces_routing_curve(tmp_path):
    angles = [-60.0, 0.0, 30.0]
    s = resolve(preset="fig4a_4MHz",
                overrides=[f"sweep={{parameter: qwp_angle_deg, values: {angles}}}"])
    sweep(s, tmp_path)
    rows = _sweep_rows(tmp_path)
    rc = routing_curve(s.system, angles, True, s.outputs.qwp_offset_deg)
    np.testing.assert_allclose([float(r["fraction_H"]) for r in rows], rc.fraction_h, atol=1e-9)


def test_failed_point_does_not_stop_others(tmp_path):
    s = resolve(preset="beat", overrides=["sweep={parameter: system.splitting_mhz, values: [0.0, 4.0]}"])
    m = sweep(s, tmp_path, workers=2)
    rows = _sweep_rows(tmp_path)
    assert [r["status"] for r in rows] == ["failed", "ok"]
    assert "InsufficientOscillations" in rows[0]["error"] or "no polarisation oscillation" in rows[0]["error"]
    assert m.status == "1 of 2 points failed"
    assert main(["sweep", "--preset", "beat", "--parameter", "system.splitting_mhz", "--values", "0",
                 "--out", str(tmp_path / "cli")]) == EXIT_NUMERIC


# command line ----------------------------------------------------------------

def test_cli_presets_list(capsys):
    assert main(["presets", "list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


def test_cli_presets_show(capsys):
    assert main(["presets", "show", "fig4a_20MHz"]) == EXIT_OK
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["system"]["splitting_mhz"] == 20.0


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["simulate", "--set", "system.kappa_mhz=-2", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "system.kappa_mhz" in capsys.readouterr().err
    assert main(["simulate", "--preset", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_numeric_exit_code(tmp_path):
    code = main(["simulate", "--preset", "fig4a_0MHz", "--set", "outputs.oscillation={basis: linear}",
                 "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC


def test_cli_simulate_with_plots(tmp_path):
    code = main(["simulate", "--preset", "fig4a_4MHz", "--set", "outputs.wavepacket_qwp_deg=[0.0]",
                 "--out", str(tmp_path), "--plots"])
    assert code == EXIT_OK
    assert (tmp_path / "plots" / "wavepackets.png").stat().st_size > 0
    assert (tmp_path / "plots" / "basis_fluxes.png").exists()


def test_cli_route(tmp_path):
    code = main(["route", "--preset", "fig4a_20MHz", "--angles=-90:90:45", "--out", str(tmp_path), "--plots"])
    assert code == EXIT_OK
    assert len(read_csv(tmp_path / "routing_birefringence_on.csv")) == 6
    assert (tmp_path / "plots" / "routing.png").exists()
    assert main(["route", "--angles", "1:2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_sweep(tmp_path):
    code = main(["sweep", "--preset", "fig4a_4MHz", "--parameter", "system.g_mhz", "--values", "3,4",
                 "--out", str(tmp_path), "--workers", "2", "--plots"])
    assert code == EXIT_OK
    assert len(_sweep_rows(tmp_path)) == 2
    assert (tmp_path / "plots" / "sweep.png").exists()
    assert main(["sweep", "--preset", "fig3", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_fit(tmp_path, capsys):
    from birefsim.characterization import synthetic_scan

    scan = synthetic_scan(noise=0.01, seed=2)
    p = tmp_path / "scan.csv"
    p.write_text("detuning_mhz,transmission\n" + "".join(f"{float(x)!r},{float(y)!r}\n" for x, y in zip(scan.detuning, scan.signal)))
    assert main(["fit", str(p), "--out", str(tmp_path / "fit"), "--plots"]) == EXIT_OK
    assert "splitting_mhz = " in capsys.readouterr().out
    rows = read_csv(tmp_path / "fit" / "fit.csv")
    assert float(dict(zip(*rows))["splitting_mhz"]) == pytest.approx(3.471, rel=0.02)
    assert (tmp_path / "fit" / "fit.png").exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("freq,signal\n1,2\n")
    assert main(["fit", str(bad)]) == EXIT_CONFIG
