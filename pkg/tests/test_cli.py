import json
import os
import subprocess
import sys

from matpivot import cli


def run_cli(args):
    return cli.main(args)


class TestCli:
    def test_lambda12_writes_reports(self, tmp_path):
        out = tmp_path / "l12"
        code = run_cli(["lambda12", "--fixture", "FIX-SL2",
                        "--trajectories", "20", "--steps", "120",
                        "--seed", "3", "--out", str(out)])
        assert code == 0
        assert (out / "report.json").exists()
        doc = json.loads((out / "report.json").read_text())
        assert doc["checks"]["lambda_positive"]

    def test_json_format(self, tmp_path):
        out = tmp_path / "l12j"
        code = run_cli(["lambda12", "--fixture", "FIX-SL2",
                        "--trajectories", "10", "--steps", "60",
                        "--seed", "3", "--out", str(out),
                        "--format", "json"])
        assert code == 0
        assert (out / "neglog_sigma.json").exists()

    def test_contraction_and_threads(self, tmp_path):
        outs = []
        for t in ("1", "4"):
            out = tmp_path / f"c{t}"
            code = run_cli(["contraction", "--fixture", "FIX-SL2",
                            "--trajectories", "12", "--steps", "80",
                            "--seed", "5", "--out", str(out),
                            "--threads", t])
            assert code == 0
            outs.append(out)
        for f in os.listdir(outs[0]):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()

    def test_rank_subcommand(self, tmp_path):
        code = run_cli(["rank", "--fixture", "FIX-ROTPROJ",
                        "--trajectories", "200", "--steps", "40",
                        "--seed", "1", "--out", str(tmp_path / "rk")])
        assert code == 0

    def test_mixing_and_spectral_and_coefficients(self, tmp_path):
        for cmd, steps in (("mixing", "60"), ("spectral", "120"),
                           ("coefficients", "200")):
            code = run_cli([cmd, "--fixture", "FIX-SL2",
                            "--trajectories", "20", "--steps", steps,
                            "--seed", "2", "--out",
                            str(tmp_path / cmd)])
            assert code == 0, cmd

    def test_lemma_suite(self, tmp_path):
        out = tmp_path / "suite.json"
        code = run_cli(["lemma-suite", "--trajectories", "500",
                        "--seed", "4", "--out", str(out)])
        assert code == 0
        rows = json.loads(out.read_text())
        assert len(rows) == 12
        assert all(r["pass"] for r in rows)

    def test_pivot_diagnostics(self, tmp_path):
        out = tmp_path / "piv"
        code = run_cli(["pivot-diagnostics", "--seed", "6",
                        "--trajectories", "40", "--steps", "300",
                        "--out", str(out)])
        assert code == 0
        assert (tmp_path / "piv_mtrace.csv").exists()
        assert (tmp_path / "piv_events.json").exists()

    def test_pivot_diagnostics_matrix_model(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pivot_model": "matrix",
                                   "fixture": "FIX-PINGPONG",
                                   "n_pairs": 150}))
        code = run_cli(["pivot-diagnostics", "--config", str(cfg),
                        "--fixture", "FIX-PINGPONG", "--seed", "1",
                        "--out", str(tmp_path / "mp")])
        assert code == 0

    def test_schottky_build_pingpong(self, tmp_path):
        out = tmp_path / "model.json"
        code = run_cli(["schottky-build", "--fixture", "FIX-PINGPONG",
                        "--seed", "0", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["alpha"] > 0

    def test_schottky_build_failure_exit_code(self, tmp_path):
        code = run_cli(["schottky-build", "--fixture", "FIX-ROT",
                        "--seed", "0", "--out", str(tmp_path / "m.json")])
        assert code == 1

    def test_config_file_distribution(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "distribution": {"kind": "finite_support", "d": 2, "params": {
                "atoms": [[[2.0, 1.0], [1.0, 1.0]],
                          [[1.0, 1.0], [1.0, 2.0]]]}}}))
        code = run_cli(["lambda12", "--config", str(cfg),
                        "--trajectories", "10", "--steps", "60",
                        "--seed", "9", "--out", str(tmp_path / "cfgout")])
        assert code == 0

    def test_console_entrypoint(self):
        proc = subprocess.run(
            [sys.executable, "-m", "matpivot.cli", "lambda12",
             "--fixture", "FIX-SL2", "--trajectories", "5",
             "--steps", "40", "--seed", "1", "--out", "/tmp/mp_cli_test"],
            capture_output=True, text=True)
        assert proc.returncode == 0
