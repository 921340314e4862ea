import json
import math

import numpy as np
import pytest

from hpea.cli import main
from hpea.statefile import (
    StateFileError,
    load_density_matrix,
    save_density_matrix,
)


def run_cli(*argv):
    return main(list(argv))


class TestStateFile:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        path = tmp_path / "state.dm"
        save_density_matrix(path, rho, comment="round trip")
        back, report = load_density_matrix(path)
        assert np.array_equal(back, rho)
        assert not report.clipped

    def test_small_negative_eigenvalue_clipped(self, tmp_path):
        rho = np.diag([0.6, 0.4 + 2e-7, -2e-7, 0.0]).astype(complex)
        path = tmp_path / "state.dm"
        save_density_matrix(path, rho)
        back, report = load_density_matrix(path)
        assert report.clipped
        assert np.linalg.eigvalsh(back).min() >= 0.0
        assert np.trace(back).real == pytest.approx(1.0)

    def test_bad_trace_rejected(self, tmp_path):
        path = tmp_path / "state.dm"
        save_density_matrix(path, np.eye(4, dtype=complex))
        with pytest.raises(StateFileError):
            load_density_matrix(path)

    def test_non_hermitian_rejected(self, tmp_path):
        rho = np.diag([0.5, 0.5, 0.0, 0.0]).astype(complex)
        rho[0, 1] = 0.1
        path = tmp_path / "state.dm"
        save_density_matrix(path, rho)
        with pytest.raises(StateFileError):
            load_density_matrix(path)

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.dm"
        path.write_text("dmfile 1\ndim 2\nqubits 1\n1 0\n")
        with pytest.raises(StateFileError):
            load_density_matrix(path)


class TestGenerateState:
    def test_default_report(self, capsys):
        assert run_cli("generate-state") == 0
        out = capsys.readouterr().out
        assert "fidelity_vs_optimal 1" in out
        assert f"{1.0 / 18.0:.12g}" in out

    def test_noisy_report_shows_degraded_fidelity(self, capsys, tmp_path):
        out_file = tmp_path / "noisy.dm"
        assert run_cli("generate-state", "--xi", "0.98", "--zeta", "0.13",
                       "--out", str(out_file)) == 0
        out = capsys.readouterr().out
        fid = float(out.splitlines()[0].split()[1])
        assert fid < 1.0
        rho, _ = load_density_matrix(out_file)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)

    def test_written_state_round_trips_through_analyze(self, capsys, tmp_path):
        out_file = tmp_path / "ideal.dm"
        assert run_cli("generate-state", "--out", str(out_file)) == 0
        capsys.readouterr()
        assert run_cli("analyze-state", "--state", str(out_file),
                       "--phi-grid", "720",
                       "--out", str(tmp_path / "profile.csv"), "--plot") == 0
        out = capsys.readouterr().out
        dev = float([l for l in out.splitlines()
                     if l.startswith("holevo_deviation_exact")][0].split()[1])
        assert dev == pytest.approx(math.tan(math.pi / 9.0) ** 2, abs=1e-6)
        assert (tmp_path / "profile.png").exists()


class TestSimulateHpea:
    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert run_cli("simulate-hpea", "--n-ens", "200", "--seed", "7",
                           "--out", str(path)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("simulate-hpea", "--n-ens", "200", "--seed", "1", "--out", str(a))
        run_cli("simulate-hpea", "--n-ens", "200", "--seed", "2", "--out", str(b))
        assert a.read_bytes() != b.read_bytes()

    def test_csv_structure(self, tmp_path):
        path = tmp_path / "runs.csv"
        run_cli("simulate-hpea", "--n-ens", "50", "--seed", "3",
                "--out", str(path))
        lines = path.read_text().splitlines()
        comments = [l for l in lines if l.startswith("#")]
        assert any("config_hash=" in c and "seed=3" in c for c in comments)
        assert any("hl=" in c and "snl=" in c and "qpea=" in c
                   for c in comments)
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "phi_true,bits,phi_est"
        data = [l for l in lines if not l.startswith("#")][1:]
        assert len(data) == 50

    def test_qpea_state_selector(self, capsys):
        assert run_cli("simulate-hpea", "--state", "qpea", "--n-ens", "500",
                       "--seed", "5") == 0
        out = capsys.readouterr().out
        assert "holevo_deviation" in out

    def test_calibrated_estimator_on_stored_state(self, tmp_path, capsys):
        out_file = tmp_path / "state.dm"
        run_cli("generate-state", "--xi", "0.97", "--out", str(out_file))
        capsys.readouterr()
        assert run_cli("simulate-hpea", "--state", str(out_file),
                       "--estimator", "calibrated", "--n-ens", "300",
                       "--seed", "2") == 0


class TestSweeps:
    def test_mismatch_sweep_csv(self, tmp_path):
        path = tmp_path / "sweep.csv"
        assert run_cli("sweep-mismatch", "--xi-min", "0.96", "--xi-max", "1.0",
                       "--xi-points", "3", "--n-ens", "400", "--seed", "1",
                       "--out", str(path)) == 0
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "xi,holevo_deviation,stderr,mu,success_probability"
        assert len(lines) == 4

    def test_spdc_sweep_runs(self, tmp_path):
        path = tmp_path / "spdc.csv"
        assert run_cli("sweep-spdc", "--vary", "eps2", "--points", "2",
                       "--eps-min", "0.05", "--eps-max", "0.06",
                       "--n-ens", "300", "--seed", "1", "--out", str(path)) == 0
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0].startswith("eps2,")

    def test_plot_rendering(self, tmp_path):
        path = tmp_path / "sweep.csv"
        assert run_cli("sweep-mismatch", "--xi-min", "0.98", "--xi-max", "1.0",
                       "--xi-points", "2", "--n-ens", "200", "--seed", "1",
                       "--out", str(path), "--plot") == 0
        assert (tmp_path / "sweep.png").exists()


class TestOtherCommands:
    def test_snl_three_photons(self, capsys):
        assert run_cli("snl-optimize", "--n", "3", "--restarts", "8") == 0
        out = capsys.readouterr().out
        v = float(out.splitlines()[0].split()[1])
        assert v == pytest.approx(0.655845, abs=1e-4)

    def test_hom_perfect_overlap(self, capsys):
        assert run_cli("hom", "--xi1", "1", "--xi2", "1") == 0
        out = capsys.readouterr().out
        assert "visibility 1" in out

    def test_hom_grid(self, tmp_path):
        path = tmp_path / "hom.csv"
        assert run_cli("hom", "--grid", "4", "--out", str(path)) == 0
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("#")]
        assert len(lines) == 17

    def test_pdf_outcome_curves(self, tmp_path):
        path = tmp_path / "pdf.csv"
        assert run_cli("pdf", "--state", "optimal", "--phi-grid", "64",
                       "--out", str(path), "--plot",
                       str(tmp_path / "pdf.png")) == 0
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "phi," + ",".join(f"p_{y:03b}" for y in range(8))
        assert len(lines) == 65
        assert (tmp_path / "pdf.png").exists()

    def test_pdf_analytic_curves(self, tmp_path):
        path = tmp_path / "analytic.csv"
        assert run_cli("pdf", "--analytic", "--phi-grid", "128",
                       "--out", str(path), "--plot") == 0
        lines = [l for l in path.read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "phi_est,density_qpea,density_hpea"
        assert (tmp_path / "analytic.png").exists()

    def test_calibrate_outputs_dyadic_table(self, capsys, tmp_path):
        assert run_cli("calibrate", "--state", "optimal",
                       "--phi-grid", "720",
                       "--out", str(tmp_path / "cal.csv")) == 0
        out = capsys.readouterr().out.splitlines()
        values = {l.split()[0]: float(l.split()[1]) for l in out}
        assert values["000"] == pytest.approx(0.0, abs=1e-6)
        assert values["101"] == pytest.approx(2.0 * math.pi * 5.0 / 8.0,
                                              abs=1e-6)


class TestConfigAndErrors:
    def test_config_file_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"xi1": 0.9, "xi2": 0.9}))
        assert run_cli("hom", "--config", str(cfg)) == 0
        out = capsys.readouterr().out
        assert "visibility 0.81" in out

    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"xi1": 0.9}))
        assert run_cli("hom", "--config", str(cfg), "--xi1", "1.0",
                       "--xi2", "1.0") == 0
        assert "visibility 1" in capsys.readouterr().out

    def test_unknown_config_key_is_config_error(self, tmp_path):
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run_cli("hom", "--config", str(cfg)) == 2

    def test_out_of_range_flag_is_config_error(self):
        assert run_cli("generate-state", "--xi", "1.5") == 2
        assert run_cli("hom", "--xi1", "-0.2") == 2

    def test_missing_state_file_is_config_error(self, tmp_path):
        assert run_cli("analyze-state",
                       "--state", str(tmp_path / "nope.dm")) in (2, 3)

    def test_numeric_failure_exit_code(self, tmp_path):
        # A maximally mixed register carries no phase information: the
        # calibration posterior resultant vanishes.
        path = tmp_path / "mixed.dm"
        save_density_matrix(path, np.eye(8, dtype=complex) / 8.0)
        assert run_cli("calibrate", "--state", str(path),
                       "--phi-grid", "720") == 3
