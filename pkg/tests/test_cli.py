import json
import subprocess
import sys

import pytest

from cryonoise.cli import main
from cryonoise.fileio import read_noise_csv, read_sweep_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def data_of(out):
    return json.loads(out)["data"]


class TestNoiseInput:
    def test_vacuum_limit(self, capsys):
        code, out, _ = run(capsys, "noise", "input", "--f", "6e9", "--t-bath", "0")
        assert code == 0
        assert data_of(out)["t_in"] == pytest.approx(0.14398, rel=1e-4)

    def test_effective_input(self, capsys):
        code, out, _ = run(capsys, "noise", "input", "--f", "5.735e9", "--t-bath", "0.01",
                           "--f-pump", "5.968e9", "--g-twpa-db", "10")
        d = data_of(out)
        assert code == 0
        assert d["f_idler"] == pytest.approx(6.201e9)
        assert d["g_conv"] == pytest.approx(9.0)
        assert d["t_in_eff"] > d["t_in"]

    def test_invocation_recorded(self, capsys):
        _, out, _ = run(capsys, "noise", "input", "--f", "6e9", "--t-bath", "0", "--seed", "3")
        doc = json.loads(out)
        assert doc["invocation"]["argv"][1:] == ["noise", "input", "--f", "6e9", "--t-bath", "0", "--seed", "3"]
        assert doc["invocation"]["seed"] == 3
        assert doc["schema"] == "cryonoise.noise-input" and doc["version"] == "1.0"


class TestErrors:
    def test_bad_value_is_json(self, capsys):
        code, out, err = run(capsys, "noise", "input", "--f", "-1", "--t-bath", "0")
        assert code == 1 and out == ""
        assert json.loads(err)["error"] == "data"

    def test_usage_error_is_json(self, capsys):
        code, _, err = run(capsys, "noise", "bogus")
        assert code == 2
        assert json.loads(err)["error"] == "usage"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "sparam", "report", str(tmp_path / "missing.s2p"))
        assert code == 1 and json.loads(err)["error"] == "io"

    def test_malformed_csv(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("path,f\n")
        code, _, err = run(capsys, "noise", "fit", str(bad))
        assert code == 1
        assert "header" in json.loads(err)["message"]

    def test_bad_config(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"nonsense": 1}))
        code, _, err = run(capsys, "thermal", "tau", "--t", "1", "--config", str(cfg))
        assert code == 1 and "nonsense" in json.loads(err)["message"]

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "cryonoise", "noise", "input", "--f", "0", "--t-bath", "1"],
                              capture_output=True, text=True)
        assert proc.returncode != 0
        assert "error" in json.loads(proc.stderr)


class TestVlabAndFit:
    def generate(self, capsys, tmp_path, name, *extra):
        out = tmp_path / name
        code, stdout, err = run(capsys, "vlab", "generate", "--seed", "7", "--out", str(out), *extra)
        assert code == 0, err
        return out

    def test_byte_identical(self, capsys, tmp_path):
        a = self.generate(capsys, tmp_path, "a.csv", "--path", "twpa", "--f-signal", "5.7e9", "6.3e9")
        b = self.generate(capsys, tmp_path, "b.csv", "--path", "twpa", "--f-signal", "5.7e9", "6.3e9")
        assert a.read_bytes() == b.read_bytes()
        ta = json.loads((tmp_path / "a.csv.truth.json").read_text())
        tb = json.loads((tmp_path / "b.csv.truth.json").read_text())
        assert ta["data"] == tb["data"]

    def test_seed_changes_output(self, capsys, tmp_path):
        a = self.generate(capsys, tmp_path, "a.csv")
        run(capsys, "vlab", "generate", "--seed", "8", "--out", str(tmp_path / "b.csv"))
        assert a.read_bytes() != (tmp_path / "b.csv").read_bytes()

    def test_samples_readable(self, capsys, tmp_path):
        out = self.generate(capsys, tmp_path, "s.csv", "--n-setpoints", "8")
        assert len(read_noise_csv(out)) == 8

    def test_fit_with_truth_check(self, capsys, tmp_path):
        out = self.generate(capsys, tmp_path, "s.csv", "--f-signal", "5e9", "5.5e9", "6e9")
        code, stdout, err = run(capsys, "noise", "fit", str(out), "--check-truth", str(out) + ".truth.json")
        assert code == 0, err
        d = data_of(stdout)
        check = d["truth_check"]
        assert check["n"] == 3
        assert check["coverage"] == check["covered"] / 3
        for c in check["checks"]:
            assert c["covered"] == (abs(c["fitted_offset"] - c["true_offset"]) <= c["offset_err"])
        assert len(d["entries"][0]["budget"]["terms"]) == 6

    def test_noiseless_fit_recovers_truth(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"errors": {"thermometer_sigma": 0.0, "analyzer_sigma_db": 0.0,
                                              "switch": False, "analyzer_noise_floor": 0.0}}))
        out = tmp_path / "s.csv"
        assert main(["vlab", "generate", "--config", str(cfg), "--out", str(out)]) == 0
        capsys.readouterr()
        code, stdout, _ = run(capsys, "noise", "fit", str(out), "--check-truth", str(out) + ".truth.json")
        c = data_of(stdout)["truth_check"]["checks"][0]
        assert c["fitted_offset"] == pytest.approx(c["true_offset"], rel=1e-9)

    def test_photons_pipeline(self, capsys, tmp_path):
        thru = self.generate(capsys, tmp_path, "thru.csv", "--f-signal", "5.735e9")
        twpa = self.generate(capsys, tmp_path, "twpa.csv", "--path", "twpa")
        for src in (thru, twpa):
            assert main(["noise", "fit", str(src), "--out", str(src) + ".fit.json"]) == 0
        code, stdout, err = run(capsys, "noise", "photons", str(thru) + ".fit.json", str(twpa) + ".fit.json")
        assert code == 0, err
        d = data_of(stdout)
        assert len(d["points"]) == 1
        assert d["n_bar"] == pytest.approx(d["points"][0]["photons"])
        assert d["n_bar_lo"] > 0 and d["n_bar_hi"] > 0

    def test_photons_needs_both_paths(self, capsys, tmp_path):
        thru = self.generate(capsys, tmp_path, "thru.csv")
        main(["noise", "fit", str(thru), "--out", str(tmp_path / "f.json")])
        code, _, err = run(capsys, "noise", "photons", str(tmp_path / "f.json"))
        assert code == 1 and "Twpa" in json.loads(err)["message"]

    def test_one_sided_bounds_enforced(self, capsys, tmp_path):
        out = self.generate(capsys, tmp_path, "s.csv")
        code, _, err = run(capsys, "noise", "fit", str(out), "--dg-att-db", "1.0")
        assert code == 1 and "one-sided" in json.loads(err)["message"]


class TestOtherCommands:
    def test_twpa_gain_csv(self, capsys, tmp_path):
        out = tmp_path / "g.csv"
        code, _, err = run(capsys, "twpa", "gain", "--f-start", "5e9", "--f-stop", "7e9", "--n-points", "5",
                           "--i-p-ratio", "0.53", "--calibrate-loss", "--out", str(out))
        assert code == 0, err
        rows = read_sweep_csv(out)
        assert [r["f_hz"] for r in rows] == [5e9, 5.5e9, 6e9, 6.5e9, 7e9]
        assert max(r["gain_db"] for r in rows) > 10

    def test_thermal_tau(self, capsys):
        code, out, _ = run(capsys, "thermal", "tau", "--t", "0.1", "5")
        tau = data_of(out)["tau_s"]
        assert tau[1] == pytest.approx(10.0, rel=1e-9) and tau[0] > tau[1]

    def test_thermal_power(self, capsys):
        code, out, _ = run(capsys, "thermal", "power", "--t-hot", "1", "--t-cold", "0.1")
        d = data_of(out)
        assert d["power_w"] == pytest.approx(100e-6, rel=1e-12)
        assert d["steel_w"] + d["alox_w"] == pytest.approx(d["power_w"])

    def test_thermal_config_override(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"thermal": {"anchor_power": 50e-6}}))
        _, out, _ = run(capsys, "thermal", "power", "--t-hot", "1", "--config", str(cfg))
        doc = json.loads(out)
        assert doc["data"]["power_w"] == pytest.approx(50e-6, rel=1e-12)
        assert doc["invocation"]["config"] == {"thermal": {"anchor_power": 50e-6}}

    def test_thermal_decay(self, capsys, tmp_path):
        out = tmp_path / "d.csv"
        code, stdout, _ = run(capsys, "thermal", "decay", "--t-set", "1", "--out", str(out))
        d = data_of(stdout)
        assert d["tau_fit_s"] == pytest.approx(d["tau_model_s"], rel=0.1)
        assert out.read_text().startswith("time_s,temperature_k\n")

    def test_thermal_decay_noise_seeded(self, capsys):
        _, a, _ = run(capsys, "thermal", "decay", "--t-set", "1", "--noise-k", "1e-3", "--seed", "2")
        _, b, _ = run(capsys, "thermal", "decay", "--t-set", "1", "--noise-k", "1e-3", "--seed", "2")
        _, c, _ = run(capsys, "thermal", "decay", "--t-set", "1", "--noise-k", "1e-3", "--seed", "3")
        assert a == b and a != c

    def test_sparam_synth_and_report(self, capsys, tmp_path):
        s2p = tmp_path / "a.s2p"
        assert main(["sparam", "synth", "--fmt", "DB", "--unit", "GHZ", "--out", str(s2p)]) == 0
        code, out, _ = run(capsys, "sparam", "report", str(s2p))
        d = data_of(out)
        assert d["attenuation_mean_db"] == pytest.approx(9.977, abs=1e-9)
        assert d["matched"]

    def test_json_to_out_file(self, capsys, tmp_path):
        out = tmp_path / "t.json"
        code, stdout, _ = run(capsys, "thermal", "tau", "--t", "1", "--out", str(out))
        assert code == 0 and stdout == ""
        assert json.loads(out.read_text())["schema"] == "cryonoise.thermal-tau"
