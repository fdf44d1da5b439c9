import csv
import json
import math

import numpy as np
import pytest

from phonogap import cli
from phonogap.errors import ConfigError
from phonogap.rates import KB_OVER_H_GHZ_PER_K

COARSE = ("--resolution", "8,6,4", "--n-kpoints", "8", "--n-modes", "24")
NANOBEAM = (
    "--structure", "nanobeam", "--resolution", "5,4,4", "--n-kpoints", "12",
    "--n-modes", "14", "--f-max-ghz", "60", "--window-hi-ghz", "60",
    "--broadening-ghz", "3",
)


def read_csv(path):
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    return rows[0], rows[1:]


def only_dir(root, prefix):
    matches = [p for p in root.iterdir() if p.name.startswith(prefix + "-")]
    assert len(matches) == 1, matches
    return matches[0]


@pytest.fixture(scope="module")
def gap_sweep_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gapsweep")
    assert cli.main(["gap", *COARSE, "--out-dir", str(out)]) == 0
    assert cli.main(["sweep", *COARSE, "--out-dir", str(out)]) == 0
    return only_dir(out, "gap"), only_dir(out, "sweep")


class TestConfig:
    def test_round_trip_is_identity(self):
        config = cli.RunConfig(w_nm=91.0, resolution=(6, 5, 4), seed=7)
        again = cli.RunConfig.from_dict(json.loads(cli.dump_config(config)))
        assert again == config

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"w_nm": 90.0, "t_nm": 20.0}))
        config = cli.load_config(str(path), {"t_nm": 25.0, "w_nm": None})
        assert config.w_nm == 90.0
        assert config.t_nm == 25.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            cli.RunConfig.from_dict({"w_um": 0.09})

    def test_run_id_is_stable_and_sensitive(self):
        a = cli.RunConfig()
        b = cli.RunConfig()
        c = cli.RunConfig(w_nm=95.8)
        assert a.run_id == b.run_id
        assert len(a.run_id) == 10
        assert int(a.run_id, 16) >= 0
        assert a.run_id != c.run_id

    def test_validation_catches_bad_values(self):
        with pytest.raises(ConfigError, match="structure"):
            cli.RunConfig(structure="slab").validate()
        with pytest.raises(ConfigError, match="sweep_param"):
            cli.RunConfig(sweep_param="q").validate()
        with pytest.raises(ConfigError, match="window"):
            cli.RunConfig(window_lo_ghz=50.0, window_hi_ghz=40.0).validate()

    def test_out_dir_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env-out"))
        assert cli.RunConfig().resolved_out_dir() == tmp_path / "env-out"
        assert cli.RunConfig(out_dir="x").resolved_out_dir().name == "x"


class TestDispatch:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli.main(["frobnicate"]) == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_help_exits_0(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "subcommand" in capsys.readouterr().out or True

    def test_invalid_geometry_exits_2(self, tmp_path, capsys):
        code = cli.main(["bands", "--w-nm", "-4", "--out-dir", str(tmp_path)])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        code = cli.main(["gap", "--config", str(tmp_path / "nope.json")])
        assert code == 2

    def test_malformed_config_file_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["gap", "--config", str(path)]) == 2


class TestBands:
    def test_single_k_point_csv(self, tmp_path):
        code = cli.main([
            "bands", "--resolution", "6,5,4", "--n-kpoints", "1",
            "--n-modes", "6", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        header, rows = read_csv(only_dir(tmp_path, "bands") / "bands.csv")
        assert header == [
            "k_reduced", "band_index", "frequency_GHz", "parity_y", "parity_z"
        ]
        assert len(rows) == 6
        assert {r[0] for r in rows} == {"0"}
        assert [int(r[1]) for r in rows] == list(range(6))
        freqs = [float(r[2]) for r in rows]
        assert freqs == sorted(freqs)
        labels = {r[3] for r in rows} | {r[4] for r in rows}
        assert labels <= {"even", "odd", "mixed"}


class TestDos:
    def test_nanobeam_dos_csv(self, tmp_path):
        assert cli.main(["dos", *NANOBEAM, "--out-dir", str(tmp_path)]) == 0
        header, rows = read_csv(only_dir(tmp_path, "dos") / "dos.csv")
        assert header == ["frequency_GHz", "dos_per_GHz"]
        dos = np.array([float(r[1]) for r in rows])
        assert np.all(dos >= 0)
        assert dos.max() > 0

    def test_undersampled_k_path_exits_3(self, tmp_path, capsys):
        code = cli.main([
            "dos", "--resolution", "8,6,4", "--n-kpoints", "3",
            "--n-modes", "24", "--out-dir", str(tmp_path),
        ])
        assert code == 3
        assert "error:" in capsys.readouterr().err


class TestGap:
    def test_report_contents(self, gap_sweep_run):
        gap_dir, _ = gap_sweep_run
        report = json.loads((gap_dir / "gap.json").read_text())
        gap = report["gap"]
        assert gap is not None
        assert math.isclose(
            gap["center_ghz"], 0.5 * (gap["f_lo_ghz"] + gap["f_hi_ghz"]),
            rel_tol=1e-12,
        )
        assert report["n_gaps_in_window"] >= 1
        assert report["reference_center_ghz"] == 59.1
        assert report["reference_width_ghz"] == 17.3
        comp = report["comparison"]
        assert comp["center_within_tolerance"] is True
        assert comp["width_within_tolerance"] is True
        assert comp["center_deviation_pct"] < 15.0

    def test_artifacts_namespaced_by_run_id(self, gap_sweep_run):
        gap_dir, _ = gap_sweep_run
        report = json.loads((gap_dir / "gap.json").read_text())
        assert gap_dir.name == f"gap-{report['run_id']}"
        config = cli.RunConfig.from_dict(
            json.loads((gap_dir / "config.json").read_text())
        )
        assert config.run_id == report["run_id"]
        assert config.resolution == (8, 6, 4)

    def test_gap_csv_schema(self, gap_sweep_run):
        gap_dir, _ = gap_sweep_run
        header, rows = read_csv(gap_dir / "gap.csv")
        assert header == ["param_value_nm", "center_GHz", "width_GHz"]
        assert len(rows) == 1
        assert rows[0][0] == "22.1"

    def test_sweep_middle_row_matches_gap_run_exactly(self, gap_sweep_run):
        gap_dir, sweep_dir = gap_sweep_run
        gap_line = (gap_dir / "gap.csv").read_text().splitlines()[1]
        sweep_lines = (sweep_dir / "sweep.csv").read_text().splitlines()
        assert sweep_lines[2] == gap_line

    def test_sweep_rows_sorted_by_value(self, gap_sweep_run):
        _, sweep_dir = gap_sweep_run
        header, rows = read_csv(sweep_dir / "sweep.csv")
        assert header == ["param_value_nm", "center_GHz", "width_GHz"]
        values = [float(r[0]) for r in rows]
        assert values == sorted(values) == [19.1, 22.1, 25.1]

    def test_rerun_is_byte_identical(self, gap_sweep_run, tmp_path):
        gap_dir, _ = gap_sweep_run
        assert cli.main(["gap", *COARSE, "--out-dir", str(tmp_path)]) == 0
        again = only_dir(tmp_path, "gap")
        assert again.name == gap_dir.name
        # config.json records the differing out_dir; the numeric artifacts
        # must match byte for byte.
        for name in ("gap.csv", "gap.json"):
            assert (again / name).read_bytes() == (gap_dir / name).read_bytes()


class TestFig1b:
    def test_bundle_shades_detected_gap(self, gap_sweep_run, tmp_path):
        gap_dir, _ = gap_sweep_run
        code = cli.main([
            "fig1b", *COARSE, "--broadening-ghz", "3", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        bundle = only_dir(tmp_path, "fig1b")
        assert (bundle / "bands.csv").exists()
        assert (bundle / "dos.csv").exists()
        script = (bundle / "fig1b.gp").read_text()
        shading = [l for l in script.splitlines() if "set object" in l]
        assert len(shading) == 1
        tokens = shading[0].split()
        lo = float(tokens[tokens.index("first") + 1])
        hi = float(tokens[len(tokens) - 1 - tokens[::-1].index("first") + 1])
        report = json.loads((gap_dir / "gap.json").read_text())
        assert abs(lo - report["gap"]["f_lo_ghz"]) < 1e-8
        assert abs(hi - report["gap"]["f_hi_ghz"]) < 1e-8

    def test_nanobeam_bundle_has_no_shading(self, tmp_path):
        assert cli.main(["fig1b", *NANOBEAM, "--out-dir", str(tmp_path)]) == 0
        script = (only_dir(tmp_path, "fig1b") / "fig1b.gp").read_text()
        assert "set object" not in script

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            assert cli.main(["fig1b", *NANOBEAM, "--out-dir", str(out)]) == 0
        dir_a = only_dir(out_a, "fig1b")
        dir_b = only_dir(out_b, "fig1b")
        for name in ("bands.csv", "dos.csv", "fig1b.gp"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


class TestRates:
    def test_csv_schema_and_detailed_balance(self, tmp_path):
        code = cli.main([
            "rates", "--delta-ghz", "46", "--temp-range", "2:20:4",
            "--chi-rho", "2e-8", "--chi-rho-sq", "1e-12",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        header, rows = read_csv(only_dir(tmp_path, "rates") / "rates.csv")
        assert header == [
            "temperature_K", "gamma_up_MHz", "gamma_down_MHz",
            "gamma_raman_MHz", "t1_ns",
        ]
        assert len(rows) == 4
        t1s = []
        for row in rows:
            temp, up, down, raman, t1 = map(float, row)
            boltz = math.exp(46.0 / (KB_OVER_H_GHZ_PER_K * temp))
            assert math.isclose(down / up, boltz, rel_tol=1e-6)
            assert raman > 0
            t1s.append(t1)
        assert t1s == sorted(t1s, reverse=True)

    def test_requires_exactly_one_temperature_spec(self, tmp_path, capsys):
        base = ["rates", "--delta-ghz", "46", "--out-dir", str(tmp_path)]
        assert cli.main(base) == 2
        assert cli.main(
            base + ["--temp-k", "4", "--temp-range", "2:20:4"]
        ) == 2


class TestPumpProbe:
    def test_curve_follows_exponential_recovery(self, tmp_path):
        code = cli.main([
            "pumpprobe", "--t1-ns", "34", "--taus", "0:170:5",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        header, rows = read_csv(
            only_dir(tmp_path, "pumpprobe") / "pumpprobe.csv"
        )
        assert header == ["tau_ns", "ratio"]
        for row in rows:
            tau, ratio = map(float, row)
            assert abs(ratio - (1.0 - math.exp(-tau / 34.0))) < 0.05

    def test_seeded_noise_is_reproducible(self, tmp_path):
        args = [
            "pumpprobe", "--t1-ns", "34", "--taus", "0:170:4",
            "--noise", "0.02",
        ]
        outs = []
        for sub, seed in (("a", "5"), ("b", "5"), ("c", "6")):
            out = tmp_path / sub
            assert cli.main(
                args + ["--seed", seed, "--out-dir", str(out)]
            ) == 0
            outs.append(
                (only_dir(out, "pumpprobe") / "pumpprobe.csv").read_bytes()
            )
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_trace_dump(self, tmp_path):
        code = cli.main([
            "pumpprobe", "--t1-ns", "34", "--taus", "40",
            "--dump-trace-ns", "40", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        header, rows = read_csv(only_dir(tmp_path, "pumpprobe") / "trace.csv")
        assert header == ["time_ns", "signal"]
        times = np.array([float(r[0]) for r in rows])
        signal = np.array([float(r[1]) for r in rows])
        assert np.all(np.diff(times) > 0)
        assert np.all(signal >= 0)
        assert signal.max() > 0

    def test_conflicting_rate_specs_exit_2(self, tmp_path):
        assert cli.main([
            "pumpprobe", "--t1-ns", "34", "--gamma-up-mhz", "10",
            "--out-dir", str(tmp_path),
        ]) == 2
        assert cli.main([
            "pumpprobe", "--gamma-up-mhz", "10", "--out-dir", str(tmp_path),
        ]) == 2


def write_recovery_csv(path, t1_ns=100.0):
    taus = np.linspace(5, 400, 12)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tau_ns", "ratio"])
        for tau in taus:
            writer.writerow([tau, 1.0 - math.exp(-tau / t1_ns)])


class TestFitT1:
    def test_noiseless_roundtrip(self, tmp_path):
        src = tmp_path / "rec.csv"
        write_recovery_csv(src)
        code = cli.main([
            "fit-t1", "--input", str(src), "--out-dir", str(tmp_path),
        ])
        assert code == 0
        report = json.loads(
            (only_dir(tmp_path, "fit-t1") / "fit_t1.json").read_text()
        )
        assert math.isclose(report["t1_ns"], 100.0, rel_tol=1e-6)
        assert report["n_points"] == 12
        assert report["dof"] == 11
        assert report["wrss"] < 1e-15

    def test_missing_column_exits_2(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("time,value\n1,0.5\n")
        assert cli.main([
            "fit-t1", "--input", str(src), "--out-dir", str(tmp_path),
        ]) == 2

    def test_degenerate_data_exits_3(self, tmp_path):
        src = tmp_path / "flat.csv"
        src.write_text("tau_ns,ratio\n10,0\n20,0\n30,0\n")
        assert cli.main([
            "fit-t1", "--input", str(src), "--out-dir", str(tmp_path),
        ]) == 3


def write_rate_csv(path, temps, rates, sigmas):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["temperature_K", "rate_MHz", "sigma_MHz"])
        writer.writerows(zip(temps, rates, sigmas))


class TestFitTemp:
    def test_linear_data_ranks_linear_first(self, tmp_path):
        temps = np.linspace(4.4, 30, 10)
        src = tmp_path / "rates.csv"
        write_rate_csv(src, temps, 1.47 + 0.68 * temps, 0.1 * np.ones(10))
        code = cli.main([
            "fit-temp", "--input", str(src), "--out-dir", str(tmp_path),
        ])
        assert code == 0
        out = only_dir(tmp_path, "fit-temp")
        report = json.loads((out / "fit_temp.json").read_text())
        assert report["best_exponent"] == 1
        assert len(report["models"]) == 4
        assert report["models"][0]["wrss"] <= report["models"][1]["wrss"]
        header, rows = read_csv(out / "fit_temp_curves.csv")
        assert header[0] == "temperature_K"
        assert header[1] == "rate_p1_MHz"
        assert len(header) == 5
        assert len(rows) == 200

    def test_t_max_isolates_low_temperature_regime(self, tmp_path):
        rng = np.random.default_rng(50)
        temps = np.linspace(4.4, 26.0, 12)
        truth = np.where(
            temps < 13.0, -0.35 + 0.15 * temps, 0.52 + 6.3e-4 * temps**3
        )
        sigmas = np.full_like(temps, 0.02)
        src = tmp_path / "rates.csv"
        write_rate_csv(src, temps, truth + rng.normal(0, sigmas), sigmas)
        code = cli.main([
            "fit-temp", "--input", str(src), "--models", "1,3",
            "--t-max", "13", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        report = json.loads(
            (only_dir(tmp_path, "fit-temp") / "fit_temp.json").read_text()
        )
        assert report["best_exponent"] == 1
        assert report["n_points"] == 5
        best = report["models"][0]
        assert abs(best["b_mhz_per_k_pow"] - 0.15) < 0.03

    def test_bad_model_list_exits_2(self, tmp_path):
        temps = np.linspace(4.4, 30, 5)
        src = tmp_path / "rates.csv"
        write_rate_csv(src, temps, 1 + temps, np.ones(5))
        base = ["fit-temp", "--input", str(src), "--out-dir", str(tmp_path)]
        assert cli.main(base + ["--models", "1,x"]) == 2
        assert cli.main(base + ["--models", "2"]) == 2


def ellipse_contour(path, semi_x, semi_y, n=40):
    theta = np.linspace(0, 2 * np.pi, n, endpoint=False)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x_nm", "y_nm"])
        writer.writerows(zip(semi_x * np.cos(theta), semi_y * np.sin(theta)))


def arc_contour(path, radius, n=15):
    theta = np.linspace(0, np.pi / 2, n)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x_nm", "y_nm"])
        writer.writerows(zip(radius * np.cos(theta), radius * np.sin(theta)))


def tether_contours(dir_path, width):
    x = np.linspace(-30, 30, 21)
    upper = width / 2 + 0.05 * x**2 / (1 + np.abs(x) / 40.0)
    for name, values in (("upper.csv", upper), ("lower.csv", -upper)):
        with open(dir_path / name, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["x_nm", "y_nm"])
            writer.writerows(zip(x, values))


class TestFitGeom:
    def make_manifest(self, tmp_path, tether_order=("upper", "lower")):
        entries = []
        # The second block is taller than wide, so its fitted long axis is
        # the y-axis and the CLI has to unswap the reported diameters.
        for i, (sx, sy) in enumerate([(47.85, 44.95), (45.5, 47.0)]):
            ellipse_contour(tmp_path / f"block{i}.csv", sx, sy)
            entries.append({"path": f"block{i}.csv", "role": "block"})
        arc_contour(tmp_path / "corner.csv", 16.9)
        entries.append({"path": "corner.csv", "role": "corner"})
        tether_contours(tmp_path, 22.1)
        for name in tether_order:
            entries.append({"path": f"{name}.csv", "role": "tether-edge"})
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"contours": entries}))
        return manifest

    def test_recovers_parameters_from_exact_contours(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        code = cli.main([
            "fit-geom", "--manifest", str(manifest), "--out-dir", str(tmp_path),
        ])
        assert code == 0
        header, rows = read_csv(only_dir(tmp_path, "fit-geom") / "fit_geom.csv")
        assert header == ["parameter", "average_nm", "sd_nm"]
        table = {r[0]: (float(r[1]), float(r[2])) for r in rows}
        assert set(table) == {"w", "h", "r", "t"}
        assert math.isclose(table["w"][0], 47.85 + 45.5, rel_tol=1e-9)
        assert math.isclose(table["h"][0], 44.95 + 47.0, rel_tol=1e-9)
        assert math.isclose(table["r"][0], 16.9, rel_tol=1e-9)
        assert math.isclose(table["t"][0], 22.1, rel_tol=1e-6)
        assert math.isclose(table["w"][1], abs(95.7 - 91.0) / math.sqrt(2),
                            rel_tol=1e-6)

    def test_edge_order_does_not_matter(self, tmp_path):
        manifest = self.make_manifest(tmp_path, tether_order=("lower", "upper"))
        assert cli.main([
            "fit-geom", "--manifest", str(manifest), "--out-dir", str(tmp_path),
        ]) == 0
        _, rows = read_csv(only_dir(tmp_path, "fit-geom") / "fit_geom.csv")
        table = {r[0]: float(r[1]) for r in rows}
        assert math.isclose(table["t"], 22.1, rel_tol=1e-6)

    def test_odd_tether_count_exits_2(self, tmp_path, capsys):
        entries = [{"path": "upper.csv", "role": "tether-edge"}]
        tether_contours(tmp_path, 22.1)
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"contours": entries}))
        assert cli.main([
            "fit-geom", "--manifest", str(manifest), "--out-dir", str(tmp_path),
        ]) == 2
        assert "pairs" in capsys.readouterr().err

    def test_unknown_role_exits_2(self, tmp_path):
        ellipse_contour(tmp_path / "c.csv", 10, 9)
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps({"contours": [{"path": "c.csv", "role": "hole"}]})
        )
        assert cli.main([
            "fit-geom", "--manifest", str(manifest), "--out-dir", str(tmp_path),
        ]) == 2

    def test_missing_contour_file_exits_2(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps({"contours": [{"path": "ghost.csv", "role": "block"}]})
        )
        assert cli.main([
            "fit-geom", "--manifest", str(manifest), "--out-dir", str(tmp_path),
        ]) == 2
