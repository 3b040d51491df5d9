import json
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import pytest
import yaml

from core.device import BUNDLED_MULTI_CONFIG
from tests.conftest import CLI


@pytest.mark.integration
class TestCLI:
    """End-to-end runs of the czleak commands"""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.out = self.temp_dir / "out"

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def run_cli_command(self, args, env=None, out=None):
        """Run czleak with --out pointing into the temp directory"""
        full_env = dict(os.environ)
        full_env.pop("CZLEAK_CONFIG", None)
        full_env.update(env or {})
        return subprocess.run([sys.executable, str(CLI), "--out", str(out or self.out)] + args,
                              capture_output=True, text=True, env=full_env)

    def read_csv_lines(self, name):
        return (self.out / name).read_text(encoding="utf-8").splitlines()

    def test_help(self):
        result = self.run_cli_command(["--help"])
        assert result.returncode == 0
        for command in ("solve-off", "sweep", "simulate", "fit", "budget", "crosstalk", "spectrum", "synth"):
            assert command in result.stdout

    def test_solve_off(self):
        result = self.run_cli_command(["solve-off", "--fs", "4.27"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["solution"]["f_cs_off"] == pytest.approx(5.594, abs=0.01)
        assert report["g_gate_mhz"] == pytest.approx(27.0, abs=0.2)
        assert report["g2_closed_form_mhz"] == pytest.approx(report["g2_mhz"], abs=1e-2)
        manifest = json.loads((self.out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "solve-off"
        assert "solve-off.json" in manifest["outputs"]

    def test_solve_off_sweep(self):
        result = self.run_cli_command(["solve-off", "--fs-range", "4.26,4.28,0.01"])
        assert result.returncode == 0, result.stderr
        lines = self.read_csv_lines("off_points.csv")
        assert lines[0].startswith("# units:")
        assert lines[1] == "f_s_ghz,f_cs_off_ghz,residual_ghz"
        assert len(lines) == 5

    def test_solve_off_without_root(self):
        result = self.run_cli_command(["solve-off", "--fs", "4.27", "--bracket", "6.5,6.9"])
        assert result.returncode == 2
        assert "Error:" in result.stderr

    def test_sweep_valley_at_off_point(self):
        result = self.run_cli_command(["sweep", "--fs", "4.27", "--fcs-range", "5.50,5.70,0.01",
                                       "--pulse", "rectangular"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert abs(report["f_cs_min"] - report["f_cs_off_point"]) < 0.005
        assert report["p_leak_idle"] > report["p_leak_min"]
        lines = self.read_csv_lines("leakage_valley.csv")
        assert lines[1] == "f_cs_ghz,p_leak,marker"
        assert lines[-2].endswith(",valley_min")
        assert lines[-1].endswith(",idle")

    def test_default_flat_top_sweep_valley_at_off_point(self):
        result = self.run_cli_command(["sweep", "--fs", "4.27", "--fcs-range", "5.55,5.65,0.01"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["pulse"] == "flat-top"
        assert abs(report["f_cs_min"] - report["f_cs_off_point"]) < 0.005
        assert report["p_leak_min"] < 0.01 * report["p_leak_idle"]

    def test_sweep_empty_range(self):
        result = self.run_cli_command(["sweep", "--fcs-range", "5.7,5.5,0.01"])
        assert result.returncode == 2

    def test_simulate_zero_length(self):
        result = self.run_cli_command(["simulate", "--pulse", "rectangular", "--gate-ns", "0"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["p_leak_total"] == 0.0
        assert report["p_return_11"] == 1.0

    def test_simulate_trajectory(self):
        result = self.run_cli_command(["simulate", "--fcs", "5.594", "--trajectory", "50"])
        assert result.returncode == 0, result.stderr
        lines = self.read_csv_lines("trajectory.csv")
        assert lines[0] == "# units: t in ns, populations as probabilities"
        assert lines[1] == "t_ns,p11,p02,pS,pD"
        assert len(lines) == 52

    def test_simulate_multi_spectator(self):
        result = self.run_cli_command(["--config", str(BUNDLED_MULTI_CONFIG), "simulate",
                                       "--pulse", "rectangular", "--gate-ns", "20", "--trajectory", "10"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert len(report["p_leak_S"]) == 3
        assert len(report["additivity"]["per_spectator"]) == 3
        assert self.read_csv_lines("trajectory.csv")[1].endswith(",pS1,pS2,pS3")

    def test_simulate_spectator_count_mismatch(self):
        result = self.run_cli_command(["--config", str(BUNDLED_MULTI_CONFIG), "simulate",
                                       "--fs", "4.27", "--fs", "4.28"])
        assert result.returncode == 2

    def test_synth_then_fit(self):
        result = self.run_cli_command(["synth", "--l1", "1.21e-3", "--l2", "4.66e-3", "--p0", "0.01"])
        assert result.returncode == 0, result.stderr
        result = self.run_cli_command(["fit", "--model", "leak", str(self.out / "synth_leak.csv")])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["L1"] == pytest.approx(1.21e-3, rel=1e-3)
        assert report["fit"]["L2"] == pytest.approx(4.66e-3, rel=1e-3)

    def test_synth_seeded_noise(self):
        args = ["synth", "--l1", "1e-3", "--l2", "5e-3", "--shots", "1000"]
        first = self.run_cli_command(["--seed", "7"] + args)
        data = (self.out / "synth_leak.csv").read_bytes()
        second = self.run_cli_command(["--seed", "7"] + args)
        assert first.returncode == second.returncode == 0
        assert (self.out / "synth_leak.csv").read_bytes() == data

    def test_fit_fidelity_needs_lambda1(self):
        self.run_cli_command(["synth", "--l1", "1e-3", "--l2", "5e-3"])
        result = self.run_cli_command(["fit", "--model", "fidelity", str(self.out / "synth_fidelity.csv")])
        assert result.returncode == 2
        assert "lambda1" in result.stderr

    def test_fit_malformed_csv(self):
        path = self.temp_dir / "bad.csv"
        path.write_text("0,0.01\n10\n", encoding="utf-8")
        result = self.run_cli_command(["fit", "--model", "leak", str(path)])
        assert result.returncode == 2

    def test_budget(self):
        result = self.run_cli_command(["budget", "--p-floor", "0.01", "--l1", "1.17e-3"])
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["L2_seepage"] == pytest.approx(4.6586e-3, rel=1e-4)
        assert report["L1_min_floor"] == pytest.approx(4.6586e-5, rel=1e-4)
        assert report["eps_leak"] == pytest.approx(1.4625e-3)

    def test_budget_zero_floor(self):
        result = self.run_cli_command(["budget", "--p-floor", "0"])
        assert json.loads(result.stdout)["L1_min_floor"] == 0.0

    def test_budget_resonant_t1_warning(self, bundled_dict, write_config):
        for record in bundled_dict["modes"]:
            record.pop("t1_resonant_us", None)
        result = self.run_cli_command(["--config", str(write_config(bundled_dict)), "budget"])
        assert result.returncode == 0, result.stderr
        assert "Warning:" in result.stderr
        assert "t1_resonant_us" in result.stderr

    def test_crosstalk(self):
        matrix = self.temp_dir / "m.csv"
        matrix.write_text("z_a,z_b\n1,0\n0,1\n", encoding="utf-8")
        targets = self.temp_dir / "z.csv"
        targets.write_text("z_a,0.1\nz_b,-0.2\n", encoding="utf-8")
        result = self.run_cli_command(["crosstalk", str(matrix), str(targets)])
        assert result.returncode == 0, result.stderr
        assert json.loads(result.stdout)["residual"] == 0.0
        assert self.read_csv_lines("compensated.csv")[2:] == ["z_a,0.1,0.1", "z_b,-0.2,-0.2"]

    def test_crosstalk_singular(self):
        matrix = self.temp_dir / "m.csv"
        matrix.write_text("z_a,z_b\n1,1\n1,1\n", encoding="utf-8")
        targets = self.temp_dir / "z.csv"
        targets.write_text("z_a,0.1\nz_b,0.2\n", encoding="utf-8")
        result = self.run_cli_command(["crosstalk", str(matrix), str(targets)])
        assert result.returncode == 2

    def test_spectrum(self):
        result = self.run_cli_command(["spectrum", "--delta-range", "-0.01,0.01,0.001"])
        assert result.returncode == 0, result.stderr
        lines = self.read_csv_lines("spectrum.csv")
        assert lines[1] == "delta_sl_ghz,e1_ghz,e2_ghz,e3_ghz"
        assert len(lines) == 23

    def test_yaml_format(self):
        result = self.run_cli_command(["--format", "yaml", "budget"])
        assert result.returncode == 0, result.stderr
        assert yaml.safe_load(result.stdout)["p_floor"] == 0.01
        assert (self.out / "budget.yaml").exists()

    def test_config_from_environment(self):
        result = self.run_cli_command(["budget"], env={"CZLEAK_CONFIG": str(self.temp_dir / "missing.json")})
        assert result.returncode == 2
        assert "missing.json" in result.stderr

    def test_repeated_runs_identical(self):
        first = self.run_cli_command(["solve-off", "--fs", "4.27"])
        report = (self.out / "solve-off.json").read_bytes()
        second = self.run_cli_command(["solve-off", "--fs", "4.27"])
        assert first.stdout == second.stdout
        assert (self.out / "solve-off.json").read_bytes() == report
