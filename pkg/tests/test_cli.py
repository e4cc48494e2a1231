from pathlib import Path

import numpy as np
import pytest

import cartelstore as cs
from cartelstore import outputs
from cartelstore.cli import main
from cartelstore.config import format_config, parse_config_text

REPO = Path(__file__).resolve().parents[1]
BASELINE_CFG = str(REPO / "configs" / "baseline.cfg")
APPENDIX_CFG = str(REPO / "configs" / "appendix.cfg")

SOLVE_FAST = ["--grid", "12,12", "--dt", "4e-3", "--max-iters", "300000"]


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solved")
    rc = main(["solve", BASELINE_CFG, str(out)] + SOLVE_FAST)
    assert rc == 0
    return out


class TestSolveCommand:
    def test_outputs_and_manifest(self, solved_dir):
        names = {p.name for p in solved_dir.iterdir()}
        assert {"u.csv", "p.csv", "q_star.csv", "drift_k.csv", "drift_z.csv",
                "shock_locus.csv", "manifest.json"} <= names
        assert outputs.verify_manifest(solved_dir)
        man = outputs.load_manifest(solved_dir)
        assert man["converged"] is True
        assert len(man["outputs"]) == 6
        assert man["residual_sup"] <= 1e-6
        assert set(man["branch_kmin"]) <= {"A", "B"}

    def test_rerun_byte_identical(self, solved_dir, tmp_path):
        out2 = tmp_path / "again"
        rc = main(["solve", BASELINE_CFG, str(out2)] + SOLVE_FAST)
        assert rc == 0
        for name in ("u.csv", "p.csv", "q_star.csv", "drift_k.csv",
                     "drift_z.csv", "shock_locus.csv"):
            assert (solved_dir / name).read_bytes() == \
                (out2 / name).read_bytes()

    def test_appendix_config_runs(self, tmp_path):
        out = tmp_path / "ap"
        rc = main(["solve", APPENDIX_CFG, str(out)] + SOLVE_FAST)
        assert rc == 0
        man = outputs.load_manifest(out)
        params, _, _ = parse_config_text(man["config"])
        assert params.k_max == 0.07 and params.g_coeff == 10.0

    def test_nonconvergence_exit_one(self, tmp_path):
        out = tmp_path / "short"
        rc = main(["solve", BASELINE_CFG, str(out), "--grid", "10,10",
                   "--dt", "1e-4", "--max-iters", "5"])
        assert rc == 1

    def test_bad_config_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(Path(BASELINE_CFG).read_text() + "oops = 3\n")
        rc = main(["solve", str(cfg), str(tmp_path / "o")])
        assert rc == 2
        err = capsys.readouterr().err
        assert "oops" in err

    def test_missing_config_exit_two(self, tmp_path):
        rc = main(["solve", str(tmp_path / "nope.cfg"), str(tmp_path / "o")])
        assert rc == 2

    def test_resume_from_previous(self, solved_dir, tmp_path):
        out2 = tmp_path / "resumed"
        rc = main(["solve", BASELINE_CFG, str(out2), "--init-from",
                   str(solved_dir)] + SOLVE_FAST)
        assert rc == 0
        man = outputs.load_manifest(out2)
        assert man["iterations"] <= 5      # restart from a fixed point


class TestSimulateCommand:
    def test_short_horizon_reports_no_period(self, solved_dir, tmp_path):
        out = tmp_path / "sim"
        rc = main(["simulate", str(solved_dir), "--k0", "0.0", "--z0", "0.5",
                   "--T", "1.0", "--out", str(out)])
        assert rc == 0
        man = outputs.load_manifest(out, "simulate_manifest.json")
        assert man["period_years"] is None
        assert (out / "trajectory.csv").exists()
        assert outputs.verify_manifest(out, "simulate_manifest.json")

    def test_seeded_rerun_byte_identical(self, solved_dir, tmp_path):
        outs = []
        for tag in ("s1", "s2"):
            out = tmp_path / tag
            rc = main(["simulate", str(solved_dir), "--k0", "0.01", "--z0",
                       "0.5", "--T", "2.0", "--seed", "77", "--out", str(out)])
            assert rc == 0
            outs.append((out / "trajectory.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_fields_dir_exit_two(self, tmp_path):
        rc = main(["simulate", str(tmp_path / "ghost"), "--k0", "0",
                   "--z0", "0.5", "--T", "1.0"])
        assert rc == 2

    def test_simulate_into_solve_dir_keeps_solve_provenance(self, solved_dir):
        before = (solved_dir / "manifest.json").read_bytes()
        rc = main(["simulate", str(solved_dir), "--k0", "0.0", "--z0", "0.5",
                   "--T", "0.5"])
        assert rc == 0
        assert (solved_dir / "manifest.json").read_bytes() == before
        assert (solved_dir / "simulate_manifest.json").exists()


class TestMeasureCommand:
    def test_measure_csv_contracts(self, solved_dir, tmp_path):
        out = tmp_path / "meas"
        rc = main(["measure", str(solved_dir), "--T", "10", "--burn-in", "1",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        lines = (out / "measure.csv").read_text().splitlines()
        assert lines[1] == "k,z,density,log10_density"
        rows = np.array([[float(x) for x in ln.split(",")]
                         for ln in lines[2:]])
        dens, logd = rows[:, 2], rows[:, 3]
        assert dens.sum() == pytest.approx(1.0, abs=1e-12)
        zero = dens == 0.0
        assert np.all(logd[zero] == outputs.LOG10_SENTINEL)
        np.testing.assert_allclose(logd[~zero], np.log10(dens[~zero]),
                                   atol=1e-12)


class TestAsymptoticsCommand:
    def test_baseline_values_printed(self, capsys):
        rc = main(["asymptotics", BASELINE_CFG, "--z", "0.5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "-906.6666667" in out
        assert "343.3333333" in out
        assert "= 19" in out          # uniqueness condition value
        assert "inconsistency residual" in out

    def test_uniqueness_warning_near_golden_ratio(self, tmp_path, capsys):
        # alpha*eps = 0.6 sits below the boundary (alpha*eps)^2+alpha*eps = 1
        text = format_config(cs.baseline_params().with_(alpha=1500.0),
                                10, 10)
        cfg = tmp_path / "g.cfg"
        cfg.write_text(text)
        rc = main(["asymptotics", str(cfg), "--z", "0.5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "warning: uniqueness condition not satisfied" in out


class TestValidateCommand:
    def test_all_pass_exit_zero(self, capsys, tmp_path):
        report_dir = tmp_path / "rep"
        rc = main(["validate", BASELINE_CFG, "--grid", "16,16",
                   "--dt", "3e-3", "--out", str(report_dir)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS" in out and "FAIL" not in out
        assert outputs.verify_manifest(report_dir)
        man = outputs.load_manifest(report_dir)
        assert man["all_passed"] is True
        assert man["runtime_budget_s"] > 0

    def test_injected_flux_bug_fails(self, capsys):
        rc = main(["validate", BASELINE_CFG, "--grid", "16,16",
                   "--skip-solve", "--inject-flux-bug"])
        out = capsys.readouterr().out
        assert rc == 1
        assert any(line.split()[0] == "godunov-flux-oracle" and "FAIL" in line
                   for line in out.splitlines() if line.strip())


class TestExportPlots:
    def test_scripts_reference_csvs(self, solved_dir, tmp_path):
        out = tmp_path / "plots"
        rc = main(["export-plots", str(solved_dir), "--out", str(out)])
        assert rc == 0
        scripts = sorted(p.name for p in out.glob("*.gp"))
        assert "plot_q_star.gp" in scripts and "plot_measure.gp" in scripts
        text = (out / "plot_q_star.gp").read_text()
        assert "q_star.csv" in text
