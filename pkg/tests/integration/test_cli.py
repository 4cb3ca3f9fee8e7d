"""
Integration tests for the dppmc command line.
"""
import json

import pytest

from src.main import EXIT_ACCEPTANCE, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from src.models.run_record import read_records_csv
from src.theory.checks import NegativeCorrelationReport


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    """Keep DPPMC_SEED from leaking into the runs"""
    monkeypatch.delenv("DPPMC_SEED", raising=False)


@pytest.fixture
def cmaes_toml(tmp_path):
    """Fixture to provide a small CMA-ES config file"""
    path = tmp_path / "cmaes.toml"
    path.write_text(
        'kind = "cmaes"\n'
        "seeds = [0, 1]\n"
        "budget = 4\n"
        "\n"
        "[optimizer]\n"
        'functions = ["sphere"]\n'
        "dim = 4\n"
        "population = 8\n"
    )
    return path


@pytest.mark.integration
class TestRunCommand:
    """Test suite for 'run'"""

    def test_run_lists_written_files(self, cmaes_toml, tmp_path, capsys):
        """Test 'run' prints the files it wrote"""
        out = tmp_path / "out"
        assert main(["run", str(cmaes_toml), "--out", str(out)]) == EXIT_OK
        assert capsys.readouterr().out.split() == ["records.csv", "summary.csv", "curves.svg"]
        assert (out / "curves.svg").exists()

    def test_seeds_flag_overrides_config(self, cmaes_toml, tmp_path, monkeypatch):
        """Test --seeds wins over DPPMC_SEED"""
        monkeypatch.setenv("DPPMC_SEED", "9")
        out = tmp_path / "out"
        assert main(["run", str(cmaes_toml), "--out", str(out), "--seeds", "3,4", "--jobs", "2"]) == EXIT_OK
        assert {record.seed for record in read_records_csv(out / "records.csv")} == {3, 4}

    def test_environment_seed(self, cmaes_toml, tmp_path, monkeypatch):
        """Test DPPMC_SEED wins over config seeds"""
        monkeypatch.setenv("DPPMC_SEED", "9")
        out = tmp_path / "out"
        assert main(["run", str(cmaes_toml), "--out", str(out)]) == EXIT_OK
        assert {record.seed for record in read_records_csv(out / "records.csv")} == {9}

    def test_unknown_key_is_a_validation_error(self, tmp_path):
        """Test an unknown key exits with code 1"""
        path = tmp_path / "bad.toml"
        path.write_text('kind = "cmaes"\nbudgets = 3\n')
        assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_VALIDATION

    def test_missing_config_is_a_validation_error(self, tmp_path):
        """Test a missing config exits with code 1"""
        assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_VALIDATION

    def test_bad_seed_list(self, cmaes_toml, tmp_path):
        """Test duplicate CLI seeds exit with code 1"""
        assert main(["run", str(cmaes_toml), "--out", str(tmp_path / "out"), "--seeds", "1,1"]) == EXIT_VALIDATION

    def test_missing_dataset_is_a_runtime_error(self, tmp_path):
        """Test a missing dataset exits with code 2"""
        path = tmp_path / "kernel.toml"
        path.write_text(
            'kind = "kernel-mse"\n\n[kernel]\ncomponents = [2]\nratios = [1.0]\nrepetitions = 2\n'
            f"dataset = {json.dumps(str(tmp_path / 'missing.csv'))}\n"
        )
        assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_RUNTIME


@pytest.mark.integration
class TestTheoryCheckCommand:
    """Test suite for 'theory-check'"""

    @pytest.mark.slow
    def test_default_seed_passes(self, capsys):
        """Test every report passes for seed 0 and the command exits 0"""
        code = main(["theory-check", "--json", "--seed", "0", "--trials", "20000"])
        reports = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        assert reports[0]["name"] == "variance_scalar"
        assert all(report["passed"] for report in reports)

    def test_failed_report_exits_with_acceptance_code(self, monkeypatch, capsys):
        """Test a failing report maps to exit code 3"""
        failing = NegativeCorrelationReport(
            name="negative_correlation_d1", passed=False, d=1, simplex_max_dot=-1.0, trials=1, violations=1
        )
        monkeypatch.setattr("src.main.run_theory_suite", lambda seed, trials: [failing])
        assert main(["theory-check", "--seed", "0"]) == EXIT_ACCEPTANCE


@pytest.mark.integration
class TestPlotCommand:
    """Test suite for 'plot'"""

    def test_plot_records(self, cmaes_toml, tmp_path, capsys):
        """Test re-plotting a records file keeps its digest"""
        out = tmp_path / "out"
        main(["run", str(cmaes_toml), "--out", str(out)])
        capsys.readouterr()
        svg = tmp_path / "replot.svg"
        assert main(["plot", str(out / "records.csv"), "--out", str(svg), "--linear"]) == EXIT_OK
        assert svg.read_bytes().startswith(b"<?xml")
        digest = read_records_csv(out / "records.csv")[0].config_digest
        assert f"config_digest={digest}".encode() in svg.read_bytes()

    def test_plot_empty_records_fails(self, tmp_path):
        """Test re-plotting empty records exits with code 2"""
        records = tmp_path / "records.csv"
        records.write_text("iteration,cumulative_evals,objective,seed,method\n")
        assert main(["plot", str(records), "--out", str(tmp_path / "x.svg")]) == EXIT_RUNTIME
