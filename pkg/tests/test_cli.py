import pytest

from oodforecast import cli

CONFIG = """\
method = "var_ol"
window = 24
schedule = "regimes"

[data.synth]
length = 3000
regime_boundaries = [2600]
regime_level_factors = [1.0, 0.5]
regime_amp_factors = [1.0, 0.5]
seed = 3

[replicate]
n = 3
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(CONFIG)
    return p


def test_parse_run_and_override(cfg):
    cmd = cli.parse_args(["run", "--config", str(cfg), "--override", "window=12"])
    assert cmd.verb == "run" and cmd.config == cfg and cmd.overrides == ("window=12",)


@pytest.mark.parametrize(
    "argv",
    [["frobnicate"], ["run"], ["run", "--config", "c.toml", "--bogus"], ["run", "--config", "c", "--override", "window"]],
)
def test_usage_errors_exit_two(argv, capsys):
    assert cli.main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_validate_ok(cfg, capsys):
    assert cli.main(["validate", "--config", str(cfg)]) == 0
    assert "R0, R1" in capsys.readouterr().out


def test_run_appends_results_and_reports_progress(cfg, tmp_path, capsys):
    out = tmp_path / "results.csv"
    longer = "data.synth.length=3400"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--override", longer]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--override", "method=copy_last_day"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "dataset,method,features,seed,period,n_samples,mae,rmse"
    assert len(lines) == 1 + 2 + 2
    assert "streamed" in capsys.readouterr().err


def test_short_data_fails_with_one_line(cfg, capsys):
    code = cli.main(["run", "--config", str(cfg), "--override", "data.synth.length=1440",
                     "--override", "data.synth.regime_boundaries=[1000]"])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "InsufficientDataError" in err[0]


def test_replicate_is_byte_identical(cfg, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["replicate", "--config", str(cfg), "--out", str(a), "--override", "replicate.n=10"]) == 0
    assert cli.main(["replicate", "--config", str(cfg), "--out", str(b), "--override", "replicate.n=10"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 10 * 2


def test_sweep_then_report(cfg, tmp_path, capsys):
    cfg.write_text(CONFIG + '\n[sweep]\nmethods = ["copy_last_hour", "var"]\nfeatures = ["E", "ET"]\n')
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--override", "replicate.n=1"]) == 0
    rows = out.read_text().splitlines()[1:]
    combos = {tuple(r.split(",")[1:3]) for r in rows}
    assert combos == {("copy_last_hour", "E"), ("var", "E"), ("var", "ET")}
    capsys.readouterr()
    assert cli.main(["report", "--input", str(out), "--format", "markdown"]) == 0
    assert "| Dataset | Method | Feat. | R0 | R1 |" in capsys.readouterr().out


def test_synth_writes_three_csvs(cfg, tmp_path):
    d = tmp_path / "data"
    assert cli.main(["synth", "--config", str(cfg), "--out", str(d)]) == 0
    assert sorted(p.name for p in d.iterdir()) == ["counters.csv", "energy.csv", "temperature.csv"]
    cfg2 = tmp_path / "csv.toml"
    cfg2.write_text(
        'method = "copy_last_hour"\nschedule = "whole"\n[data]\n'
        'energy = "data/energy.csv"\ncounters = "data/counters.csv"\ntemperature = "data/temperature.csv"\n'
    )
    assert cli.main(["validate", "--config", str(cfg2)]) == 0


def test_hpo_writes_trials(cfg, tmp_path):
    out = tmp_path / "hpo.json"
    assert cli.main(["hpo", "--config", str(cfg), "--out", str(out), "--override", "hpo.budget=2"]) == 0
    assert '"best"' in out.read_text()
    assert cli.main(["hpo", "--config", str(cfg), "--override", "method=var"]) == 1
