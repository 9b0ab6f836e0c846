import json
import subprocess
import sys

import numpy as np
import pytest

from branchcast.cli import main
from branchcast.data import read_series_csv, series_to_csv
from branchcast.model import model_from_json
from branchcast.synthetic import six_branch_preset

TRANSACTIONS = """timestamp,item_text,unit_price,quantity,is_tip
2017-03-01T10:15:00,Coffee,2.50,2,false
2017-03-01T23:40:00,Tea,1.80,1,false
2017-03-02T02:10:00,Beer,4.00,3,false
2017-03-02T11:00:00,Tip,1.00,1,true
2017-03-02T12:00:00,Cake,3.20,1,false
2017-03-03T09:30:00,Coffee,2.50,-1,false
"""


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("series")
    for eid, s in six_branch_preset(seed=5).items():
        (d / f"{eid}.csv").write_text(series_to_csv(s))
    return d


def run(*args):
    return main([str(a) for a in args])


def test_ingest(tmp_path):
    src = tmp_path / "tx.csv"
    src.write_text(TRANSACTIONS)
    out = tmp_path / "daily.csv"
    assert run("ingest", src, "--out", out, "--entity", "shop") == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "date,value"
    # 02:10 belongs to the previous business day; the tip is dropped
    assert lines[1].startswith("2017-03-01,") and float(lines[1].split(",")[1]) == pytest.approx(18.8)
    assert float(lines[2].split(",")[1]) == pytest.approx(3.2)
    report = json.loads(out.with_suffix(".report.json").read_text())
    assert report["n_dropped_tips"] == 1 and report["n_input"] == 6
    assert out.with_suffix(".manifest.json").exists()


def test_ingest_malformed_exits_2(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("timestamp,item_text,unit_price,quantity,is_tip\n"
                   + "not-a-date,x,1,1,false\n" * 3 + "2017-01-01T10:00:00,x,1,1,false\n")
    assert run("ingest", src, "--out", tmp_path / "o.csv") == 2
    assert "malformed" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path, data_dir):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("fit", data_dir / "alpha-1.csv", "--out", a)
    run("fit", data_dir / "alpha-1.csv", "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_fit_forecast_roundtrip(tmp_path, data_dir):
    model_path = tmp_path / "m.json"
    assert run("fit", data_dir / "beta-5.csv", "--out", model_path) == 0
    model = model_from_json(model_path.read_text())
    assert model.entity_id == "beta-5"
    fc_path = tmp_path / "fc.csv"
    assert run("forecast", model_path, "--start", "2018-01-01", "--end", "2018-01-31",
               "--out", fc_path) == 0
    lines = fc_path.read_text().splitlines()
    assert lines[0] == "date,yhat,yhat_log" and len(lines) == 32
    yhat, ylog = map(float, lines[1].split(",")[1:])
    assert yhat == pytest.approx(2.0 ** ylog, rel=1e-12)
    diag = json.loads(model_path.with_suffix(".diagnostics.json").read_text())
    assert diag["n_rows"] == read_series_csv(data_dir / "beta-5.csv").n_observed


def test_components_header(tmp_path, data_dir):
    model_path = tmp_path / "m.json"
    run("fit", data_dir / "beta-6.csv", "--out", model_path)
    out = tmp_path / "c.csv"
    assert run("components", model_path, "--start", "2017-01-01", "--end", "2017-01-07", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "date,trend,weekly,monthly,yearly,total_log,total"
    cols = [float(x) if x else 0.0 for x in lines[1].split(",")[1:]]
    assert cols[0] + cols[1] + cols[2] + cols[3] == pytest.approx(cols[4], abs=1e-12)


def test_empty_range_exits_2(tmp_path, data_dir):
    model_path = tmp_path / "m.json"
    run("fit", data_dir / "beta-6.csv", "--out", model_path)
    assert run("forecast", model_path, "--start", "2018-02-01", "--end", "2018-01-01",
               "--out", tmp_path / "f.csv") == 2
    assert not (tmp_path / "f.csv").exists()


def test_missing_file_exits_2(tmp_path):
    assert run("fit", tmp_path / "nope.csv", "--out", tmp_path / "m.json") == 2


def test_transfer_zero_shot_and_adapt(tmp_path, data_dir):
    source = tmp_path / "src.json"
    train = tmp_path / "train.csv"
    full = read_series_csv(data_dir / "alpha-1.csv")
    train.write_text(series_to_csv(full.window(None, "2015-12-31")))
    run("fit", train, "--entity", "alpha-1", "--out", source)

    zs = tmp_path / "zs.json"
    assert run("transfer", source, "--mode", "zero-shot", "--target-entity", "alpha-2", "--out", zs) == 0
    zmodel = model_from_json(zs.read_text())
    assert zmodel.entity_id == "alpha-2"
    assert zmodel.lineage[-1] == {"event": "transfer", "source_entity": "alpha-1",
                                  "target_entity": "alpha-2", "mode": "zero_shot",
                                  "adapt_window": None}

    adapt_series = tmp_path / "a2016.csv"
    adapt_series.write_text(series_to_csv(read_series_csv(data_dir / "alpha-2.csv")
                                          .window("2016-01-01", "2016-12-31")))
    ad = tmp_path / "ad.json"
    weights = tmp_path / "w.csv"
    assert run("transfer", source, "--mode", "adapt", "--adapt-series", adapt_series,
               "--target-entity", "alpha-2", "--weights-out", weights, "--out", ad) == 0
    amodel = model_from_json(ad.read_text())
    assert [e["event"] for e in amodel.lineage] == ["fit", "transfer"]
    assert amodel.lineage[-1]["adapt_window"] == ["2016-01-01", "2016-12-31"]
    wl = weights.read_text().splitlines()
    assert wl[0] == "date,weight" and len(wl) == 1 + 25 + 5


def test_transfer_adapt_needs_series(tmp_path, data_dir):
    model_path = tmp_path / "m.json"
    run("fit", data_dir / "beta-6.csv", "--out", model_path)
    assert run("transfer", model_path, "--mode", "adapt", "--out", tmp_path / "x.json") == 2


def test_scenario_2_outputs(tmp_path, data_dir):
    out = tmp_path / "run"
    assert run("scenario", "--data-dir", data_dir, "--scenario", "2", "--out", out) == 0
    lines = (out / "matrix.csv").read_text().splitlines()
    assert lines[0].endswith(",AVG,SD,best_source")
    body = [l.split(",") for l in lines[1:7]]
    cells = [c for row in body for c in row[1:7]]
    assert sum(1 for c in cells if c) == 30
    report = json.loads((out / "report.json").read_text())
    assert len(report["reports"]) == 6
    assert len(list((out / "models").glob("*.json"))) == 6
    assert len(list((out / "components").glob("*.csv"))) == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["input_digests"]) == 6 and manifest["tool_version"]


def test_scenario_synthetic_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("scenario", "--synthetic", 1, "--scenario", "1a", "--horizon", 6,
                   "--out", tmp_path / name) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_synthesize(tmp_path):
    assert run("synthesize", "--synthetic", 2, "--out", tmp_path) == 0
    assert len(list(tmp_path.glob("*-*.csv"))) == 6
    s = read_series_csv(tmp_path / "beta-4.csv")
    np.testing.assert_allclose(s.values, six_branch_preset(2)["beta-4"].values, rtol=1e-15)


def test_bad_arguments_exit_2():
    assert run("scenario", "--scenario", "9", "--out", "x") == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "branchcast.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
