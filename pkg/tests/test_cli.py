"""Tests for the command-line front end."""

import os

import pytest
from click.testing import CliRunner

from torusjets.cli import RunConfig, cli, read_report, write_report


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def stage_dir(tmp_path_factory, runner):
    """One additive toy stage run shared by the stage-artifact tests."""
    out = tmp_path_factory.mktemp("cli") / "stage-add"
    result = runner.invoke(cli, ["stage", "run", "--mode", "additive",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestReportFormat:
    def test_write_read_roundtrip(self, tmp_path):
        path = str(tmp_path / "r.report.txt")
        write_report(path, {"b": 2, "a": 1.5, "flag": True, "s": "x"})
        with open(path) as fh:
            text = fh.read()
        # sorted keys, %.17g floats, booleans lowercase
        assert text == "a = 1.5\nb = 2\nflag = true\ns = x\n"
        assert read_report(path) == {"a": "1.5", "b": "2",
                                     "flag": "true", "s": "x"}

    def test_runconfig_sections(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[grid]\nn = 32\n[stage]\nm = 0.8\n")
        cfg = RunConfig("t").load_file(str(path))
        assert cfg.get("grid.n", cast=int) == 32
        assert cfg.get("stage.m", cast=float) == 0.8
        assert cfg.get("missing.key", "d") == "d"


class TestGeometry:
    def test_dump_fingerprint(self, runner):
        result = runner.invoke(cli, ["geometry", "dump"])
        assert result.exit_code == 0
        assert "fingerprint.n_star = 5" in result.output
        assert "fingerprint.positivity_radius" in result.output
        assert "C_Lambda" in result.output

    def test_dump_deterministic(self, runner):
        a = runner.invoke(cli, ["geometry", "dump"]).output
        b = runner.invoke(cli, ["geometry", "dump"]).output
        assert a == b


class TestJets:
    def test_build_report(self, runner, tmp_path):
        out = str(tmp_path / "jets.report.txt")
        result = runner.invoke(cli, ["jets", "build", "--n", "64",
                                     "--out", out])
        assert result.exit_code == 0
        rep = read_report(out)
        assert rep["jets.count"] == "6"
        assert "shift.0" in rep and "renormalization.0" in rep
        assert "fingerprint.n_star" in rep

    def test_build_under_resolved_fails(self, runner):
        result = runner.invoke(cli, ["jets", "build", "--n", "16"])
        assert result.exit_code == 1

    def test_verify(self, runner):
        result = runner.invoke(cli, ["jets", "verify", "--n", "64"])
        assert result.exit_code == 0, result.output
        assert "PASS" in result.output


class TestLedger:
    def test_search_exact_exponents(self, runner):
        result = runner.invoke(cli, ["ledger", "search", "--m", "1",
                                     "--machine"])
        assert result.exit_code == 0
        assert "exponent.r_par = -7/12" in result.output
        assert "exponent.r_perp = -19/24" in result.output
        assert "exponent.mu = 29/24" in result.output
        assert "p_star = 1248/1217" in result.output

    def test_check_violated(self, runner, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[ledger]\nm = 1\nk = 4\nb = 16\nbeta = 1/10000\n"
                       "L = 16\nc_R = 1e-9\nmode = additive\nq = 0\n")
        out = str(tmp_path / "check.report.txt")
        result = runner.invoke(cli, ["ledger", "check", "--config",
                                     str(cfg), "--out", out])
        assert result.exit_code == 1
        rep = read_report(out)
        assert rep["pass.overall"] == "false"
        assert rep["failures"]          # named failing constraints

    def test_check_searched_ledger_passes(self, runner, tmp_path):
        from torusjets.ledger import search
        led = search(1)
        cfg = tmp_path / "good.cfg"
        cfg.write_text("[ledger]\nm = %s\nk = %d\nb = %d\nbeta = %s\n"
                       "L = %.17g\nc_R = %.17g\nmode = %s\nq = 0\n"
                       % (led.m, led.k, led.b, led.beta, led.L, led.c_R,
                          led.mode))
        result = runner.invoke(cli, ["ledger", "check", "--config",
                                     str(cfg)])
        assert result.exit_code == 0, result.output

    def test_check_unreadable_config(self, runner, tmp_path):
        result = runner.invoke(cli, ["ledger", "check", "--config",
                                     str(tmp_path / "nope.cfg")])
        assert result.exit_code == 3


class TestNoise:
    def test_simulate_deterministic(self, runner, tmp_path):
        outs = []
        for name in ("a.report.txt", "b.report.txt"):
            out = str(tmp_path / name)
            result = runner.invoke(cli, ["noise", "simulate", "--mode",
                                         "additive", "--seed", "7",
                                         "--out", out])
            assert result.exit_code == 0
            with open(out, "rb") as fh:
                outs.append(fh.read())
        assert outs[0] == outs[1]

    def test_simulate_seed_changes_report(self, runner, tmp_path):
        outs = []
        for seed in ("7", "8"):
            out = str(tmp_path / ("s%s.report.txt" % seed))
            runner.invoke(cli, ["noise", "simulate", "--mode",
                                "multiplicative", "--seed", seed,
                                "--out", out])
            outs.append(read_report(out)["final_b"])
        assert outs[0] != outs[1]

    def test_multiplicative_bound_reported(self, runner, tmp_path):
        out = str(tmp_path / "m.report.txt")
        result = runner.invoke(cli, ["noise", "simulate", "--mode",
                                     "multiplicative", "--out", out])
        assert result.exit_code == 0
        assert "upsilon_root_bound" in read_report(out)


class TestStage:
    def test_run_report(self, stage_dir):
        rep = read_report(str(stage_dir / "stage.report.txt"))
        assert rep["pass.overall"] == "true"
        assert rep["pass.residual"] == "true"
        assert rep["pass.determinism"] == "true"
        assert float(rep["identity.oscillation"]) < 1e-7
        assert float(rep["residual.relative"]) < 1e-6
        assert "fingerprint.positivity_radius" in rep
        assert rep["config.stage.mode"] == "additive"
        assert "toy" in rep["note"]

    def test_run_snapshots(self, stage_dir):
        names = {"v_-2.wnf", "v_-1.wnf", "v_+0.wnf", "v_+1.wnf",
                 "v_+2.wnf", "R_0.wnf", "stencil.meta"}
        assert names <= set(os.listdir(stage_dir))

    def test_residual_from_snapshots(self, runner, stage_dir, tmp_path):
        out = str(tmp_path / "res.report.txt")
        result = runner.invoke(cli, ["stage", "residual", "--in",
                                     str(stage_dir), "--out", out])
        assert result.exit_code == 0, result.output
        assert float(read_report(out)["residual.relative"]) < 1e-6

    def test_residual_detects_corruption(self, runner, stage_dir,
                                         tmp_path):
        import shutil
        bad = tmp_path / "bad"
        shutil.copytree(stage_dir, bad)
        with open(bad / "R_0.wnf", "r+b") as fh:
            fh.truncate(100)
        result = runner.invoke(cli, ["stage", "residual", "--in",
                                     str(bad)])
        assert result.exit_code == 1

    def test_full_scales_rejected(self, runner):
        result = runner.invoke(cli, ["stage", "run", "--mode", "additive",
                                     "--full"])
        assert result.exit_code == 2

    def test_unknown_flag_usage_error(self, runner):
        result = runner.invoke(cli, ["stage", "run", "--mode", "additive",
                                     "--frobnicate"])
        assert result.exit_code == 2

    def test_config_file_resolution(self, runner, tmp_path):
        # config file sets a grid too coarse for the jets: the run must
        # pick it up and fail as a check, proving file keys are applied.
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[grid]\nn = 16\n")
        result = runner.invoke(cli, ["stage", "run", "--mode", "additive",
                                     "--config", str(cfg),
                                     "--out", str(tmp_path / "o")])
        assert result.exit_code == 1


class TestAggregateReport:
    def test_aggregate_idempotent(self, runner, stage_dir):
        args = ["report", "--dir", str(stage_dir)]
        first = runner.invoke(cli, args)
        second = runner.invoke(cli, args)
        assert first.exit_code == 0
        assert first.output == second.output
        assert "stage.pass.overall = true" in first.output

    def test_aggregate_empty_dir(self, runner, tmp_path):
        result = runner.invoke(cli, ["report", "--dir", str(tmp_path)])
        assert result.exit_code == 2

    def test_aggregate_missing_dir(self, runner, tmp_path):
        result = runner.invoke(cli, ["report", "--dir",
                                     str(tmp_path / "none")])
        assert result.exit_code == 3
