"""
Test suite for the command-line interface
Tests exit codes, written artifacts and run manifests of each subcommand
"""

import json

import pandas as pd
import pytest

from app.main import build_parser, run_command


def run(tmp_path, *argv):
    return run_command(["--output", str(tmp_path), "--log-level", "WARNING", *argv])


@pytest.mark.unit
class TestParser:
    """Test cases for argument parsing"""

    def test_unknown_subcommand(self, tmp_path):
        """Test that usage errors exit with code 1"""
        assert run(tmp_path, "frobnicate") == 1

    def test_missing_box_side(self, tmp_path):
        """Test that simulate requires --L"""
        assert run(tmp_path, "simulate", "ssep") == 1

    def test_version(self, capsys):
        """Test the version flag"""
        assert run_command(["--version"]) == 0
        assert "speedchange" in capsys.readouterr().out

    def test_global_flags_before_subcommand(self):
        """Test that output and log level are global options"""
        args = build_parser().parse_args(["-o", "out", "bounds", "asep", "--which", "upper"])
        assert args.output == "out"
        assert args.command == "bounds"
        assert args.which == "upper"


@pytest.mark.unit
class TestStructuralCommands:
    """Test cases for validate, flux and classify"""

    def test_validate_passes(self, tmp_path):
        """Test a valid model and its manifest"""
        assert run(tmp_path, "validate", "simplerates") == 0
        with open(tmp_path / "validation.json") as f:
            document = json.load(f)
        assert document["model"] == "simplerates"
        assert all(c["passed"] for c in document["conditions"])
        with open(tmp_path / "manifest_validate.json") as f:
            manifest = json.load(f)
        assert manifest["exit_code"] == 0
        assert manifest["command"] == "validate"
        assert [o["path"].endswith("validation.json") for o in manifest["outputs"]] == [True]
        assert len(manifest["outputs"][0]["sha256"]) == 64

    def test_validate_fails_structurally(self, tmp_path):
        """Test that a non-gradient model exits with code 2"""
        assert run(tmp_path, "validate", "perturbed") == 2
        with open(tmp_path / "manifest_validate.json") as f:
            assert json.load(f)["exit_code"] == 2

    def test_bad_parameter(self, tmp_path):
        """Test malformed builtin parameters"""
        assert run(tmp_path, "validate", "asep", "--param", "p") == 1

    def test_flux(self, tmp_path):
        """Test the flux document and derivative table"""
        assert run(tmp_path, "flux", "asep") == 0
        with open(tmp_path / "flux.json") as f:
            document = json.load(f)
        assert document["C"] == ["3"]
        table = pd.read_csv(tmp_path / "flux_derivatives.csv")
        assert table["k"].tolist() == [2, 3]
        assert table["from_flux"].to_numpy() == pytest.approx(table["symbolic"].to_numpy(), abs=1e-9)

    def test_classify(self, tmp_path, capsys):
        """Test the printed regime summary"""
        assert run(tmp_path, "classify", "simplerates") == 0
        out = capsys.readouterr().out
        assert "d1_inflection" in out
        assert (tmp_path / "regime.json").exists()

    def test_structural_failure_on_flux(self, tmp_path, capsys):
        """Test that invalid models are refused by flux with a counterexample"""
        assert run(tmp_path, "flux", "perturbed") == 2
        assert "error:" in capsys.readouterr().err


@pytest.mark.unit
class TestNumericalCommands:
    """Test cases for bounds, simulate, gk and modecoupling"""

    def test_upper_bounds(self, tmp_path):
        """Test the bounds table layout"""
        assert run(tmp_path, "bounds", "asep", "--which", "upper", "--count", "3", "--plot") == 0
        header = (tmp_path / "dhat_bounds.csv").read_text().splitlines()[0]
        assert header == "lambda,lower,upper,lower_w,upper_w"
        frame = pd.read_csv(tmp_path / "dhat_bounds.csv")
        assert len(frame) == 3
        assert (frame["upper"] > 3.0).all()
        assert (tmp_path / "dhat_bounds.svg").read_text().startswith("<svg")
        assert not (tmp_path / "scaling.json").exists()

    def test_scaling_fit_on_longer_grids(self, tmp_path):
        """Test that grids of six or more lambdas get an asymptotic fit of the w-term bound"""
        assert run(tmp_path, "bounds", "asep", "--which", "upper", "--count", "8") == 0
        scaling = json.loads((tmp_path / "scaling.json").read_text())
        assert list(scaling) == ["upper_w"]
        assert scaling["upper_w"]["selected"] in ("power", "log_power", "log_linear", "loglog")
        assert scaling["upper_w"]["exponent"] == scaling["upper_w"]["power"]["slope"]
        assert -0.55 <= scaling["upper_w"]["exponent"] <= -0.45

    def test_simulate_is_reproducible(self, tmp_path):
        """Test that a fixed seed gives byte-identical tables"""
        argv = ["simulate", "ssep", "--L", "16", "--times", "0.5,1", "--replicas", "2", "--seed", "7"]
        assert run(tmp_path / "a", *argv) == 0
        assert run(tmp_path / "b", *argv) == 0
        for name in ("diffusivity.csv", "structure.csv", "moments.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_simulate_event_log(self, tmp_path):
        """Test the optional binary event log"""
        argv = ["simulate", "tasep", "--L", "16", "--times", "1", "--seed", "3", "--no-size-guard", "--events"]
        assert run(tmp_path, *argv) == 0
        assert (tmp_path / "events.bin").stat().st_size % 14 == 0

    def test_simulate_size_guard(self, tmp_path):
        """Test that undersized boxes are refused"""
        assert run(tmp_path, "simulate", "ssep", "--L", "8", "--times", "100") == 1

    def test_exact_green_kubo(self, tmp_path):
        """Test the small-torus oracle"""
        assert run(tmp_path, "gk", "tasep", "--L", "6", "--exact", "--lambdas", "1") == 0
        frame = pd.read_csv(tmp_path / "gk_exact.csv")
        assert frame.columns.tolist() == ["lambda", "dhat"]

    def test_laplace_consistency_table(self, tmp_path):
        """Test that --laplace-times adds the D(t) transform next to the Green-Kubo value"""
        code = run(tmp_path, "gk", "ssep", "--L", "16", "--no-size-guard", "--t-max", "50", "--lambdas", "1",
                   "--laplace-times", "0.5,1", "--replicas", "2", "--seed", "1")
        assert code == 0
        frame = pd.read_csv(tmp_path / "laplace_consistency.csv")
        assert frame.columns.tolist() == ["lambda", "from_diffusivity", "tail", "from_green_kubo", "residual"]
        assert frame["from_green_kubo"].iloc[0] == pytest.approx(2.0)

    def test_short_mode_coupling_run(self, tmp_path):
        """Test that runs too short to fit exit with an input error"""
        assert run(tmp_path, "modecoupling", "--d", "1", "--grid", "16", "--c", "1e-9", "--t-max", "5") == 1

    def test_invalid_mode_coupling_problem(self, tmp_path):
        """Test parameter validation of the closure"""
        assert run(tmp_path, "modecoupling", "--n", "1") == 1


@pytest.mark.unit
class TestReportCommand:
    """Test cases for the report bundle"""

    def test_report_collects_prior_outputs(self, tmp_path):
        """Test that report bundles earlier artifacts"""
        assert run(tmp_path, "validate", "ssep") == 0
        assert run(tmp_path, "report") == 0
        with open(tmp_path / "report.json") as f:
            bundle = json.load(f)
        assert "validation.json" in bundle["documents"]
        assert "manifest_validate.json" in bundle["documents"]
        assert "<h2>validation.json</h2>" in (tmp_path / "report.html").read_text()

    def test_missing_input_directory(self, tmp_path):
        """Test that report needs an existing input directory"""
        assert run(tmp_path, "report", "--input", str(tmp_path / "missing")) == 1
