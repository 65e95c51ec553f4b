import csv
import json

import numpy as np
import pytest

from sinkarima.arima import ArimaModel, save_model
from sinkarima.cli import RunConfig, build_parser, main
from sinkarima.series import acf


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def simulate(tmp_path, name, *args):
    out = tmp_path / name
    assert main(["simulate", "--out-dir", str(out), *args]) == 0
    return out


class TestSimulate:
    def test_byte_identical(self, tmp_path):
        a = simulate(tmp_path, "a", "--phi", "0.5", "--n", "1000", "--seed", "7")
        b = simulate(tmp_path, "b", "--phi", "0.5", "--n", "1000", "--seed", "7")
        assert (a / "readings.csv").read_bytes() == (b / "readings.csv").read_bytes()
        assert (a / "ground_truth.csv").read_bytes() == (b / "ground_truth.csv").read_bytes()

    def test_seed_matters(self, tmp_path):
        a = simulate(tmp_path, "a", "--phi", "0.5", "--seed", "7")
        b = simulate(tmp_path, "b", "--phi", "0.5", "--seed", "8")
        assert (a / "readings.csv").read_bytes() != (b / "readings.csv").read_bytes()

    def test_sidecar_rows(self, tmp_path):
        out = simulate(tmp_path, "s", "--phi", "0.5", "--spike-index", "300,400,500", "--spikes", "4")
        truth = rows(out / "ground_truth.csv")
        assert len(truth) == 7
        assert {"300", "400", "500"} <= {r["index"] for r in truth}

    def test_ar1_sample_acf(self, tmp_path):
        out = simulate(tmp_path, "s", "--phi", "0.5", "--n", "5000", "--seed", "3")
        x = np.array([float(r["value"]) for r in rows(out / "readings.csv")])
        assert acf(x, 1).coefficients[1] == pytest.approx(0.5, abs=0.05)

    def test_non_stationary_spec(self, tmp_path, capsys):
        assert main(["simulate", "--out-dir", str(tmp_path), "--phi", "1.2"]) == 2
        assert "InvalidProcessSpec" in capsys.readouterr().err


class TestFit:
    def test_white_noise(self, tmp_path):
        data = simulate(tmp_path, "wn", "--n", "2000", "--seed", "1")
        assert main(["fit", "--input", str(data / "readings.csv"), "--out-dir", str(tmp_path / "f")]) == 0
        doc = json.loads((tmp_path / "f" / "node1_temperature_model.json").read_text())
        assert ArimaModel.from_document(doc).order == (0, 0, 0)

    def test_ar2(self, tmp_path):
        data = simulate(tmp_path, "ar", "--n", "2000", "--phi", "0.5,0.3", "--seed", "1")
        assert main(["fit", "--input", str(data / "readings.csv"), "--out-dir", str(tmp_path / "f")]) == 0
        out = tmp_path / "f"
        assert ArimaModel.from_document(json.loads((out / "node1_temperature_model.json").read_text())).p == 2
        for suffix in ("acf.csv", "pacf.csv", "lagplot.csv", "diagnostics.json"):
            assert (out / f"node1_temperature_{suffix}").exists()
        assert len(rows(out / "node1_temperature_acf.csv")) == 41

    def test_unreadable_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        code = main(["fit", "--input", str(missing), "--out-dir", str(tmp_path)])
        assert code != 0 and str(missing) in capsys.readouterr().err

    def test_segments(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "1200", "--phi", "0.5")
        out = tmp_path / "f"
        code = main(["fit", "--input", str(data / "readings.csv"), "--out-dir", str(out),
                     "--segments", "a:0:599", "--segments", "b:600:1199"])
        assert code == 0
        assert (out / "node1_temperature_a_model.json").exists() and (out / "node1_temperature_b_model.json").exists()


class TestForecast:
    @pytest.fixture
    def data(self, tmp_path):
        return simulate(tmp_path, "d", "--n", "600", "--phi", "0.6") / "readings.csv"

    def test_five_rows(self, tmp_path, data):
        assert main(["forecast", "--input", str(data), "--out-dir", str(tmp_path / "f"), "--horizon", "5"]) == 0
        table = rows(tmp_path / "f" / "node1_temperature_forecast.csv")
        assert [int(r["step"]) for r in table] == [1, 2, 3, 4, 5]
        se = [float(r["std_err"]) for r in table]
        assert all(b >= a for a, b in zip(se, se[1:]))

    def test_closed_form_with_model_file(self, tmp_path):
        save_model(ArimaModel([0.5], [], 0, 0.0, 1.0, 0.0, 100), tmp_path / "m.json")
        inp = tmp_path / "in.csv"
        inp.write_text("node_id,timestamp,channel,value\n1,0,temperature,3\n1,2,temperature,8\n")
        code = main(["forecast", "--input", str(inp), "--model", str(tmp_path / "m.json"),
                     "--out-dir", str(tmp_path / "f")])
        assert code == 0
        table = rows(tmp_path / "f" / "node1_temperature_forecast.csv")
        np.testing.assert_allclose([float(r["point"]) for r in table], [4, 2, 1, 0.5, 0.25], atol=1e-12)
        for r in table:
            p, s = float(r["point"]), float(r["std_err"])
            assert float(r["lower"]) == pytest.approx(p - 1.96 * s, abs=1e-3 * s)
            assert float(r["upper"]) == pytest.approx(p + 1.96 * s, abs=1e-3 * s)

    def test_horizon_too_large(self, tmp_path, data):
        assert main(["forecast", "--input", str(data), "--out-dir", str(tmp_path), "--horizon", "26"]) == 1

    def test_bad_model_file(self, tmp_path, data):
        (tmp_path / "m.json").write_text("{}")
        assert main(["forecast", "--input", str(data), "--model", str(tmp_path / "m.json"),
                     "--out-dir", str(tmp_path)]) == 2


class TestClean:
    def test_spikes_rejected(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "800", "--phi", "0.6", "--seed", "2",
                        "--spike-index", "300,350,400,450,500,550,600,650,700")
        out = tmp_path / "c"
        assert main(["clean", "--input", str(data / "readings.csv"), "--out-dir", str(out)]) == 0
        table = rows(out / "cleaned.csv")
        assert len(table) == 800 - 200
        by_time = {float(r["timestamp"]): r for r in table}
        for t in rows(data / "ground_truth.csv"):
            r = by_time[float(t["timestamp"])]
            assert r["decision"] == "rejected"
            assert float(r["lower"]) <= float(r["output_value"]) <= float(r["upper"])
        for r in table:
            if r["decision"] == "accepted":
                assert r["output_value"] == r["observed"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["nodes"]["1"]["rejected"] >= 9

    def test_clean_stream_rate(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "2200", "--phi", "0.6", "--seed", "4")
        out = tmp_path / "c"
        main(["clean", "--input", str(data / "readings.csv"), "--out-dir", str(out)])
        table = rows(out / "cleaned.csv")
        rate = np.mean([r["decision"] != "accepted" for r in table])
        assert 0.02 <= rate <= 0.09

    def test_detect_keeps_observed(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "500", "--phi", "0.6", "--spike-index", "300")
        out = tmp_path / "c"
        assert main(["detect", "--input", str(data / "readings.csv"), "--out-dir", str(out)]) == 0
        table = rows(out / "detected.csv")
        assert all(r["output_value"] == r["observed"] for r in table)
        assert any(r["decision"] == "rejected" for r in table)

    def test_gap_conservation(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "400", "--phi", "0.6")
        lines = (data / "readings.csv").read_text().splitlines(keepends=True)
        del lines[1 + 300]
        (data / "gappy.csv").write_text("".join(lines))
        out = tmp_path / "c"
        main(["clean", "--input", str(data / "gappy.csv"), "--out-dir", str(out)])
        table = rows(out / "cleaned.csv")
        assert len(table) == 200
        assert [r["decision"] for r in table if r["observed"] == ""] == ["substituted_missing"]

    def test_untrained_node_reported(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "100", "--phi", "0.6")
        out = tmp_path / "c"
        assert main(["clean", "--input", str(data / "readings.csv"), "--out-dir", str(out)]) == 0
        assert json.loads((out / "summary.json").read_text())["nodes"]["1"]["status"] == "untrained"


class TestAcf:
    def test_stationarity_report(self, tmp_path):
        data = simulate(tmp_path, "d", "--n", "1000", "--phi", "0.5")
        out = tmp_path / "a"
        assert main(["acf", "--input", str(data / "readings.csv"), "--out-dir", str(out), "--max-lag", "10"]) == 0
        rep = json.loads((out / "node1_temperature_stationarity.json").read_text())
        assert rep["stationary"] and rep["selected_d"] == 0
        assert len(rows(out / "node1_temperature_acf.csv")) == 11


class TestConfig:
    def test_help_covers_every_field(self):
        parser = build_parser()
        helps = []
        for action in parser._subparsers._group_actions[0].choices.values():
            helps.append(action.format_help())
        text = " ".join(helps)
        for f in RunConfig.__dataclass_fields__:
            if f == "command":
                continue
            assert "--" + f.replace("_", "-") in text, f

    def test_help_exits_zero(self, capsys):
        assert main(["clean", "--help"]) == 0
        assert "--refit-mode" in capsys.readouterr().out

    def test_unknown_flag(self, tmp_path):
        assert main(["fit", "--input", "x.csv", "--bogus", "1"]) == 1

    def test_missing_command(self):
        assert main([]) == 1

    def test_flag_beats_config_beats_default(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"level": 0.9, "pmax": 4, "seed": 11}))
        out = tmp_path / "o"
        main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--seed", "12", "--n", "50"])
        eff = json.loads((out / "effective_config_simulate.json").read_text())
        assert (eff["level"], eff["pmax"], eff["seed"], eff["qmax"]) == (0.9, 4, 12, 35)

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"levle": 0.9}))
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1

    @pytest.mark.parametrize("flag", [["--level", "1.5"], ["--pmax", "-1"], ["--dmax", "3"]])
    def test_invalid_values(self, tmp_path, flag):
        assert main(["simulate", "--out-dir", str(tmp_path), *flag]) == 1

    def test_two_channels_need_choice(self, tmp_path):
        inp = tmp_path / "in.csv"
        inp.write_text("node_id,timestamp,channel,value\n1,0,temperature,3\n1,0,light,8\n")
        assert main(["fit", "--input", str(inp), "--out-dir", str(tmp_path)]) == 1
