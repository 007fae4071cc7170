import csv
import json
from pathlib import Path

import jsonschema
import pytest

from deadline_coding.analysis import delay_tolerant_policy
from deadline_coding.cli import main, parse_sweep
from deadline_coding.config import PRESETS, ConfigError, parse_config, preset, preset_names

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "summary.schema.json").read_text())

SMALL = {
    "params": {"T": 2, "d": 0.25, "lambda": 1.0, "a_max": 1, "channel_cap": None},
    "arrivals": {"pmf": [0.0, 1.0]},
    "mu_star": 0.7,
    "learner": {"kind": "ucb", "beta": 4.0},
    "horizon": 60,
    "replications": 4,
    "base_seed": 99,
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(source):
    """Rows from CSV text, or from a file when given a Path."""
    text = source.read_text() if isinstance(source, Path) else source
    return list(csv.DictReader(text.splitlines()))


class TestConfig:
    def test_presets_round_trip(self):
        for name in preset_names():
            doc = preset(name)
            again = parse_config(json.loads(json.dumps(doc.to_dict())))
            assert again.to_dict() == doc.to_dict()

    def test_fig9_parameters(self):
        doc = preset("fig9")
        assert doc.params.a_max == 6 and doc.params.T == 1
        alt = preset("fig9alt")
        assert (alt.params.d, alt.params.lam) == (0.2, 0.0)

    def test_unknown_fields_named(self):
        with pytest.raises(ConfigError, match="'colour'"):
            parse_config({**SMALL, "colour": 1})
        with pytest.raises(ConfigError, match="'params.dd'"):
            parse_config({**SMALL, "params": {**SMALL["params"], "dd": 0.1}})
        with pytest.raises(ConfigError, match="'learner.bta'"):
            parse_config({**SMALL, "learner": {"kind": "ucb", "bta": 4}})

    def test_bad_values_named(self):
        with pytest.raises(ConfigError, match="params"):
            parse_config({**SMALL, "params": {**SMALL["params"], "d": 2.0}})
        with pytest.raises(ConfigError, match="arrivals.pmf"):
            parse_config({**SMALL, "arrivals": {"pmf": [0.5, 0.6]}})
        with pytest.raises(ConfigError, match="horizon"):
            parse_config({**SMALL, "horizon": 0})
        with pytest.raises(ConfigError, match="base_seed"):
            parse_config({**SMALL, "base_seed": -1})
        with pytest.raises(ConfigError, match="params.T"):
            parse_config({**SMALL, "params": {**SMALL["params"], "T": 1.5}})
        with pytest.raises(ConfigError, match="missing config field 'params'"):
            parse_config({"mu_star": 0.5})

    def test_experiment_product(self):
        runs = preset("fig12").experiments()
        assert len(runs) == 10
        assert [r.learner.kind for r in runs[:2]] == ["ucb", "ts"]

    def test_seed_resolution(self):
        doc = parse_config({k: v for k, v in SMALL.items() if k != "base_seed"})
        runs = doc.experiments()
        assert runs[0].base_seed == doc.base_seed and 0 <= doc.base_seed < 2**64


class TestSolve:
    def test_delay_tolerant_policy_dump(self, tmp_path, capsys):
        assert main(["solve", "--preset", "fig3", "--mu", "0.7"]) == 0
        doc = json.loads(capsys.readouterr().out)
        ms = [st["decisions"][1]["m"] for st in sorted(doc["stages"], key=lambda st: st["stage"])]
        assert tuple(ms) == delay_tolerant_policy(0.7, preset("fig3").params).m

    def test_zero_belief_is_idle(self, capsys):
        assert main(["solve", "--preset", "fig9", "--mu", "0"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert all(d["m"] == 0 for st in doc["stages"] for d in st["decisions"])

    def test_malformed_config(self, tmp_path, capsys):
        bad = write(tmp_path, {**SMALL, "params": {**SMALL["params"], "lamda": 1}})
        assert main(["solve", bad, "--mu", "0.5"]) != 0
        assert "params.lamda" in capsys.readouterr().err
        notjson = tmp_path / "x.json"
        notjson.write_text("{")
        assert main(["solve", str(notjson), "--mu", "0.5"]) != 0
        assert main(["solve", "--mu", "0.5"]) != 0
        assert main(["solve", str(tmp_path / "missing.json"), "--mu", "0.5"]) != 0


class TestAnalyze:
    def test_fig3_bands(self, capsys):
        assert main(["analyze", "--preset", "fig3"]) == 0
        rows = read_csv(capsys.readouterr().out)
        assert len(rows) == 101
        for row in rows:
            mu = float(row["mu"])
            ms = [int(row[f"m_slot{t}"]) for t in range(1, 5)]
            assert (max(ms) == 0) == (mu <= 0.125)
            assert ms == sorted(ms)

    def test_fig6_rate_below_mu(self, capsys):
        assert main(["analyze", "--preset", "fig6"]) == 0
        rows = read_csv(capsys.readouterr().out)
        checked = [r for r in rows if float(r["mu"]) >= 0.25]
        assert checked and all(float(r["rate"]) < float(r["mu"]) for r in checked)

    def test_critical_sweep_in_bracket(self, capsys):
        assert main(["analyze", "--preset", "fig9", "--what", "critical", "--sweep", "lam:0:2:5"]) == 0
        for row in read_csv(capsys.readouterr().out):
            assert float(row["lower"]) - 1e-6 <= float(row["zeta"]) <= float(row["upper"]) + 1e-6

    def test_continuous_columns(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["analyze", "--preset", "fig5", "--sweep", "mu:0.5:0.9:3", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert [float(r["x1"]) for r in rows] == [6.0, 6.0, 6.0]
        assert all(abs(float(r["residual"])) <= 1e-8 for r in rows)

    def test_bad_sweeps(self, capsys):
        assert main(["analyze", "--preset", "fig3", "--sweep", "mu:0:1"]) != 0
        assert main(["analyze", "--preset", "fig3", "--sweep", "d:0:1:3"]) != 0
        assert main(["analyze", "--preset", "fig3", "--sweep", "mu:0:2:3"]) != 0
        assert main(["analyze", "--preset", "fig7"]) != 0  # no default analysis
        with pytest.raises(ConfigError):
            parse_sweep("mu:1:0:3")


class TestSimulate:
    def test_outputs_and_schema(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["simulate", cfg, "--out", str(tmp_path / "run" / "small.csv")]) == 0
        rows = read_csv(tmp_path / "run" / "small.csv")
        assert list(rows[0]) == ["n", "mean_cum_regret", "se_cum_regret", "mean_throughput", "bound"]
        assert len(rows) == 60
        summary = json.loads((tmp_path / "run" / "small.json").read_text())
        jsonschema.validate(summary, SCHEMA)
        assert summary["seed"] == 99 and summary["config"]["base_seed"] == 99
        assert summary["runs"][0]["bound_case"] == "bounded"

    def test_ts_has_no_bound_column(self, tmp_path):
        cfg = write(tmp_path, {**SMALL, "learner": {"kind": "ts"}})
        assert main(["simulate", cfg, "--out", str(tmp_path / "ts")]) == 0
        assert list(read_csv(tmp_path / "ts.csv")[0]) == ["n", "mean_cum_regret", "se_cum_regret", "mean_throughput"]

    def test_csv_format(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        main(["simulate", cfg, "--out", str(tmp_path / "f")])
        text = (tmp_path / "f.csv").read_text()
        assert text.endswith("\n") and "\r" not in text
        for line in text.splitlines()[1:]:
            for field in line.split(","):
                if "." in field or "e" in field:
                    mantissa = field.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
                    assert len(mantissa) <= 12

    def test_worker_count_gives_identical_bytes(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, {**SMALL, "learner": [{"kind": "ucb", "beta": 4.0}, {"kind": "ts"}]})
        assert main(["simulate", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
        monkeypatch.setenv("DEADLINE_CODING_WORKERS", "3")
        assert main(["simulate", cfg, "--out", str(tmp_path / "w3")]) == 0
        for kind in ("ucb", "ts"):
            assert (tmp_path / f"w1_{kind}.csv").read_bytes() == (tmp_path / f"w3_{kind}.csv").read_bytes()

    def test_overrides_and_multi_mu_names(self, tmp_path):
        assert main(["simulate", "--preset", "fig12", "--horizon", "20", "--replications", "2",
                     "--seed", "5", "--out", str(tmp_path / "f12")]) == 0
        summary = json.loads((tmp_path / "f12.json").read_text())
        jsonschema.validate(summary, SCHEMA)
        assert summary["seed"] == 5
        assert {r["csv"] for r in summary["runs"]} >= {"f12_ucb_mu0.22.csv", "f12_ts_mu0.3.csv"}

    def test_rejects_bad_workers(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["simulate", cfg, "--out", str(tmp_path / "x"), "--workers", "0"]) != 0

    def test_needs_simulation_fields(self, tmp_path, capsys):
        assert main(["simulate", "--preset", "fig3", "--out", str(tmp_path / "x")]) != 0
        assert "arrivals" in capsys.readouterr().err


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("fig3", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig9alt"):
        assert name in out
    assert main(["presets", "--show", "fig12"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["params"]["channel_cap"] == 2
    assert set(PRESETS) == set(preset_names())
