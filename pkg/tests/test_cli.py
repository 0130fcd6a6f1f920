import json

import pytest

from stakessm.cli import DEFAULTS, build_parser, config_hash, main, resolve_settings


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n-matches", "6", "--seed", "3", "--output", str(d / "raw.csv")]) == 0
    assert main(["ingest", "--input", str(d / "raw.csv"), "--output", str(d / "proc")]) == 0
    return d


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        assert main(["fit", "--bogus"]) == 1
        assert error_of(capsys)["error"] == "usage"

    def test_missing_command(self):
        assert main([]) == 1

    def test_missing_input(self, tmp_path, capsys):
        assert main(["fit", "--input", str(tmp_path / "nope.csv")]) == 2
        assert error_of(capsys)["exit_code"] == 2

    def test_malformed_header(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("match_id,minute,stake_home,stake_away\na,0,1,1\n")
        assert main(["ingest", "--input", str(bad), "--output", str(tmp_path / "o")]) == 2
        assert "odds_home" in error_of(capsys)["message"]

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[stakessm]\nnot_a_key = 1\n")
        assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "x.csv")]) == 1
        assert error_of(capsys)["error"] == "configuration"

    def test_bad_quantile(self, workdir, tmp_path):
        fit_json = tmp_path / "p.json"
        fit_json.write_text(json.dumps({"params": {"phi": 0.5, "omega": 0.3, "sigma": 0.3, "p": 0.03, "q": 0.03,
                                                   "alpha0": 0.0, "alpha": 1.0, "beta": 0.5}}))
        argv = ["forecast", "--input", str(workdir / "proc" / "processed.csv"), "--params", str(fit_json),
                "--quantile", "1.5", "--output", str(tmp_path / "f.csv")]
        assert main(argv) == 1

    def test_numerical_failure(self, workdir, capsys):
        argv = ["fit", "--input", str(workdir / "raw.csv"), "--max-iter", "1", "--m", "100"]
        assert main(argv) == 3
        assert error_of(capsys)["error"] == "numerical"


class TestSettings:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[stakessm]\nm = 40\nseed = 9\n")
        args = build_parser().parse_args(["fit", "--config", str(cfg), "--seed", "5"])
        settings = resolve_settings(args)
        assert settings["m"] == 40 and settings["seed"] == 5
        assert settings["K"] == DEFAULTS["K"]

    def test_hash_ignores_paths_and_threads(self):
        parse = build_parser().parse_args
        a = resolve_settings(parse(["fit", "--input", "a.csv", "--threads", "1"]))
        b = resolve_settings(parse(["fit", "--input", "b.csv", "--threads", "4"]))
        c = resolve_settings(parse(["fit", "--input", "a.csv", "--m", "50"]))
        assert config_hash(a) == config_hash(b) != config_hash(c)


class TestCommands:
    def test_simulate_deterministic(self, workdir, tmp_path):
        out = tmp_path / "again.csv"
        assert main(["simulate", "--n-matches", "6", "--seed", "3", "--output", str(out)]) == 0
        assert out.read_bytes() == (workdir / "raw.csv").read_bytes()

    def test_ingest_outputs(self, workdir):
        proc = workdir / "proc"
        text = (proc / "processed.csv").read_text().splitlines()
        assert text[0].startswith("# stakessm ") and text[1].startswith("# config_hash ")
        assert len([ln for ln in text if not ln.startswith("#")]) == 1 + 6 * 85
        assert (proc / "descriptives.csv").exists() and (proc / "cross_correlation.csv").exists()

    def test_fit_forecast_backtest(self, workdir, tmp_path, capsys):
        proc = str(workdir / "proc" / "processed.csv")
        fit_json = tmp_path / "fit.json"
        assert main(["fit", "--input", proc, "--output", str(fit_json)]) == 0
        doc = json.loads(fit_json.read_text())
        assert doc["convergence"]["status"] == "converged"
        assert doc["provenance"]["seed"] == 0
        fc = tmp_path / "fc.csv"
        assert main(["forecast", "--input", proc, "--params", str(fit_json), "--output", str(fc),
                     "--draws", "3"]) == 0
        lines = [ln for ln in fc.read_text().splitlines() if not ln.startswith("#")]
        assert lines[0].endswith("q0.01,q0.99,flag")
        assert len(lines) == 1 + 6 * 84
        assert (tmp_path / "fc.csv.sample.csv").exists()
        bt = tmp_path / "bt.csv"
        assert main(["backtest", "--input", str(workdir / "raw.csv"), "--output", str(bt)]) == 0
        rows = [ln for ln in bt.read_text().splitlines() if not ln.startswith("#")]
        assert rows[0] == "window,0.02,0.03,0.05"
        assert [r.split(",")[0] for r in rows[1:]] == ["45-59", "60-74", "75+"]
