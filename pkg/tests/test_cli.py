import json
import subprocess
import sys

from gpdm.cli import main


def run_cli(args):
    return main(args)


class TestCliCommands:
    def test_tune(self, capsys, tmp_path):
        code = run_cli(["tune", "--problem", "circle_heat", "--n", "256", "--k", "40", "--out-dir", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "chosen_epsilon=" in out and "estimated_dim=" in out
        assert (tmp_path / "bandwidth_circle_heat_256.csv").exists()

    def test_solve_writes_snapshot(self, capsys, tmp_path):
        code = run_cli([
            "solve", "--problem", "annulus_dirichlet", "--n", "540", "--solver", "gpdm",
            "--epsilon", "0.01", "--dt", "1e-3", "--t-end", "0.002", "--k", "60",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "err_l2=" in out
        assert (tmp_path / "solve_annulus_dirichlet_gpdm_540.csv").exists()

    def test_sweep_with_config(self, capsys, tmp_path):
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(
            "\n".join(
                [
                    "problem: ellipse_heat",
                    "solver: dm",
                    "mode: random",
                    "sweep: [100, 200, 400]",
                    "trials: 2",
                    "k: 60",
                    "dt: 1.0e-3",
                    "t_eval: 5.0e-3",
                    "seed: 5",
                    "schedule: {rho: 0.2857, n_ref: 100, eps_ref: 0.008}",
                    f"out_dir: {tmp_path}",
                    "guide_slope: -0.2857",
                ]
            )
        )
        code = run_cli(["sweep", "--config", str(cfg)])
        assert code == 0
        out = capsys.readouterr().out
        assert "slope=" in out
        assert (tmp_path / "ellipse_heat_dm.csv").exists()
        assert (tmp_path / "ellipse_heat_dm.svg").exists()

    def test_sweep_with_flags(self, capsys, tmp_path):
        code = run_cli([
            "sweep", "--problem", "ellipse_heat", "--solver", "dm", "--sweep", "100", "200", "400",
            "--trials", "1", "--k", "60", "--dt", "1e-3", "--t-end", "5e-3",
            "--rho", "0.2857", "--eps-ref", "0.008", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert "slope=" in capsys.readouterr().out

    def test_compare(self, capsys, tmp_path):
        code = run_cli([
            "compare", "--problem", "annulus_dirichlet", "--solvers", "gpdm", "vcdm",
            "--n", "540", "--epsilon", "0.01", "--dt", "1e-3", "--t-end", "0.002",
            "--k", "60", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "winner=" in out
        assert (tmp_path / "compare_annulus_dirichlet_gpdm_540.csv").exists()

    def test_burgers(self, capsys, tmp_path):
        code = run_cli([
            "burgers", "--n", "400", "--modes", "60", "--bases", "gpdm",
            "--dt", "1e-3", "--t-end", "0.003", "--k", "100", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        assert "gpdm: err_l2=" in capsys.readouterr().out

    def test_ingest_heat(self, capsys, sphere_obj, tmp_path):
        code = run_cli([
            "ingest-heat", str(sphere_obj), "--times", "0.01", "--dt", "1e-3",
            "--k", "80", "--out-dir", str(tmp_path),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "n_points=600" in out
        assert "max_growth_factor=" in out


class TestCliErrors:
    def test_machine_readable_error_line(self, capsys):
        code = run_cli(["compare", "--problem", "circle_heat", "--solvers", "gpdm", "--n", "128"])
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()[-1]
        payload = json.loads(err)
        assert set(payload) == {"error", "detail"}

    def test_subprocess_exit_codes(self, tmp_path):
        env_cmd = [sys.executable, "-m", "gpdm.cli"]
        ok = subprocess.run(
            env_cmd + ["tune", "--problem", "circle_heat", "--n", "128", "--k", "20", "--out-dir", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert ok.returncode == 0
        bad = subprocess.run(
            env_cmd + ["solve", "--problem", "annulus_dirichlet", "--n", "541", "--epsilon", "0.01"],
            capture_output=True, text=True,
        )
        assert bad.returncode == 1
        json.loads(bad.stderr.strip().splitlines()[-1])
