import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from obsreward import __version__, fileio
from obsreward.cli import main, parse_grid
from obsreward.errors import ConfigError
from obsreward.model import validate


def _config(tmp_path, name="cfg.json", **sections):
    path = tmp_path / name
    path.write_text(json.dumps(sections))
    return str(path)


def run(*args):
    res = CliRunner().invoke(main, [str(a) for a in args])
    if res.exception and not isinstance(res.exception, SystemExit):
        raise res.exception
    return res


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_simulate_writes_dataset(tmp_path):
    cfg = _config(tmp_path, dgp={"scenario": "orthogonal", "n": 100, "seed": 1})
    res = run("simulate", "--config", cfg, "--out", tmp_path / "d")
    assert res.exit_code == 0, res.output
    assert "100 items" in res.output and "orthogonal" in res.output
    assert len((tmp_path / "d" / "items.jsonl").read_text().splitlines()) == 100
    assert (tmp_path / "d" / "pairs.jsonl").exists()


def test_simulate_missing_seed(tmp_path):
    cfg = _config(tmp_path, dgp={"scenario": "orthogonal", "n": 100})
    res = run("simulate", "--config", cfg, "--out", tmp_path / "d")
    assert res.exit_code == 2 and "seed" in res.output


@pytest.mark.parametrize(
    "doc, needle",
    [
        ({"dgp": {"scenario": "orthogonal", "n": 10, "seed": 1}, "extra": {}}, "extra"),
        ({"dgp": {"scenario": "orthogonal", "n": 10, "seed": 1, "colour": 2}}, "colour"),
        ({"dgp": {"scenario": "orthogonal", "n": -1, "seed": 1}}, "n"),
        ({"dgp": {"scenario": "orthogonal", "n": 10, "seed": 1, "region_prob": [0.5, 0.5, 0.5, 0.5]}}, "region_prob"),
    ],
)
def test_config_errors_exit_2(tmp_path, doc, needle):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    res = run("simulate", "--config", path, "--out", tmp_path / "d")
    assert res.exit_code == 2 and needle in res.output


def test_io_errors_exit_3(tmp_path):
    res = run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "d")
    assert res.exit_code == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _config(tmp_path, dgp={"scenario": "orthogonal", "n": 10, "seed": 1})
    assert run("simulate", "--config", cfg, "--out", blocker / "sub").exit_code == 3
    assert run("train", "--data", tmp_path / "missing", "--out", tmp_path / "m.json").exit_code == 3


def test_simulate_is_deterministic(tmp_path):
    cfg = _config(tmp_path, dgp={"scenario": "weekday_marker", "n": 50, "seed": 4})
    run("simulate", "--config", cfg, "--out", tmp_path / "a")
    run("simulate", "--config", cfg, "--out", tmp_path / "b")
    for name in ("items.jsonl", "pairs.jsonl"):
        assert _sha(tmp_path / "a" / name) == _sha(tmp_path / "b" / name)


def test_jsonl_schema_and_round_trip(tmp_path):
    cfg = _config(tmp_path, dgp={"scenario": "temporal", "n": 60, "seed": 2, "context_size": 3})
    run("simulate", "--config", cfg, "--out", tmp_path / "d")
    first = json.loads((tmp_path / "d" / "items.jsonl").read_text().splitlines()[0])
    assert list(first) == ["id", "embedding", "confounders", "instruments", "latent", "outcome", "month", "split", "context_id"]
    pair = json.loads((tmp_path / "d" / "pairs.jsonl").read_text().splitlines()[0])
    assert list(pair) == ["context_id", "winner_id", "loser_id", "margin"]
    ds = fileio.read_dataset(tmp_path / "d")
    assert validate(ds) == []
    fileio.write_dataset(ds, tmp_path / "again")
    for name in ("items.jsonl", "pairs.jsonl"):
        assert _sha(tmp_path / "d" / name) == _sha(tmp_path / "again" / name)


@pytest.fixture
def entangled_data(tmp_path):
    cfg = _config(tmp_path, dgp={"scenario": "entangled", "n": 600, "seed": 11, "context_size": 4})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "d").exit_code == 0
    return tmp_path / "d"


def test_deconfound_self_instrument_matches_ols(entangled_data, tmp_path):
    assert run("deconfound", "--data", entangled_data, "--method", "ols", "--out", tmp_path / "ols.json").exit_code == 0
    res = run("deconfound", "--data", entangled_data, "--method", "iv", "--instruments", "popularity", "--out", tmp_path / "iv.json")
    assert res.exit_code == 0
    ols, iv = fileio.read_json(tmp_path / "ols.json"), fileio.read_json(tmp_path / "iv.json")
    assert iv["alpha"]["popularity"] == pytest.approx(ols["alpha"]["popularity"], abs=1e-10)
    assert iv["first_stage_F"] is None


def test_deconfound_residualized_output(entangled_data, tmp_path):
    res = run("deconfound", "--data", entangled_data, "--method", "dml", "--folds", 3,
              "--out", tmp_path / "f.json", "--residualized", tmp_path / "r")
    assert res.exit_code == 0
    fit = fileio.read_json(tmp_path / "f.json")
    orig, resid = fileio.read_dataset(entangled_data), fileio.read_dataset(tmp_path / "r")
    a = fit["alpha"]["popularity"]
    for x, y in zip(orig.items, resid.items):
        assert y.outcome == pytest.approx(x.outcome - a * x.confounders["popularity"], abs=1e-12)


def test_estimator_errors_exit_4(entangled_data, tmp_path):
    res = run("deconfound", "--data", entangled_data, "--method", "dml", "--folds", 400, "--out", tmp_path / "f.json")
    assert res.exit_code == 4 and "FoldSizeError" in res.output
    res = run("deconfound", "--data", entangled_data, "--method", "iv", "--instruments", "region_west,region_west",
              "--out", tmp_path / "f.json")
    assert res.exit_code == 4 and "rank" in res.output


def test_usage_errors_exit_2(entangled_data, tmp_path):
    assert run("train", "--data", entangled_data).exit_code == 2
    assert run("deconfound", "--data", entangled_data, "--method", "gmm", "--out", tmp_path / "x").exit_code == 2
    assert run("sweep", "--data", entangled_data, "--grid", "logspace(1,2)", "--out", tmp_path / "s").exit_code == 2


def test_sweep_grid_rows(entangled_data, tmp_path):
    res = run("sweep", "--data", entangled_data, "--grid", "logspace(-3,3,13)", "--out", tmp_path / "s")
    assert res.exit_code == 0, res.output
    lines = [l for l in (tmp_path / "s" / "data_sweep_0.csv").read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "lambda,train_mse,valid_mse,test_pair_auc,temporal_corr"
    assert len(lines) == 1 + 13
    plot = (tmp_path / "s" / "data_plot-valid_mse_0.csv").read_text().splitlines()
    assert plot[0] == "x,y" and len(plot) == 14


def test_parse_grid():
    assert parse_grid("logspace(-1, 1, 3)") == pytest.approx([0.1, 1.0, 10.0])
    assert parse_grid("linspace(0,1,5)") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0, 1e-3,2") == [0.0, 0.001, 2.0]
    for bad in ("__import__('os')", "logspace(a,b,c)", "1,,x"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


# report bytes of the simulate -> train -> eval pipeline, frozen from the first verified run
GOLDEN_EVAL_SHA256 = "44ca2e64b16fccf966d39151bf477225fde6946aa38edd08b899ff1cc1f82b88"


def test_pipeline_golden_checksum(entangled_data, tmp_path):
    assert run("train", "--data", entangled_data, "--out", tmp_path / "m.json", "--lambda", "0.001").exit_code == 0
    res = run("eval", "--data", entangled_data, "--model", tmp_path / "m.json", "--out", tmp_path / "r", "--tag", "entangled")
    assert res.exit_code == 0, res.output
    report = tmp_path / "r" / "entangled_eval_0.csv"
    text = report.read_text()
    assert f'# version="{__version__}"' in text and '# t_test_variant="welch"' in text
    assert _sha(report) == GOLDEN_EVAL_SHA256


def test_train_heads(entangled_data, tmp_path):
    assert run("train", "--data", entangled_data, "--out", tmp_path / "bt.json", "--head", "pairwise").exit_code == 0
    bt = fileio.read_json(tmp_path / "bt.json")
    assert bt["head"] == "pairwise" and bt["bias"] == 0.0
    assert run("train", "--data", entangled_data, "--out", tmp_path / "h.json", "--confounder", "popularity").exit_code == 0
    assert "popularity" in fileio.read_json(tmp_path / "h.json")["confounder_coeffs"]


def test_ingest_csv(tmp_path):
    src = tmp_path / "rows.csv"
    src.write_text("id,e1,e2,y,pop\na,0.1,0.2,1.0,3\nb,0.3,0.4,0.5,2\nc,0.5,0.6,0.2,1\n")
    mapping = json.dumps({"id": "id", "embedding": ["e1", "e2"], "outcome": "y", "confounders": {"popularity": "pop"}})
    res = run("ingest", "--input", src, "--format", "csv", "--mapping", mapping, "--out", tmp_path / "d")
    assert res.exit_code == 0, res.output
    ds = fileio.read_dataset(tmp_path / "d")
    assert len(ds.items) == 3 and ds.items[1].embedding == (0.3, 0.4)
    assert ds.items[2].confounders == {"popularity": 1.0}


def test_ingest_rejects_nan_with_row(tmp_path):
    src = tmp_path / "rows.csv"
    src.write_text("e1,y\n0.1,1.0\n0.2,NaN\n")
    res = run("ingest", "--input", src, "--format", "csv", "--mapping", '{"embedding": ["e1"], "outcome": "y"}', "--out", tmp_path / "d")
    assert res.exit_code == 2 and "row 2" in res.output and "'y'" in res.output


def test_ingest_jsonl_round_trip(entangled_data, tmp_path):
    mapping = tmp_path / "map.json"
    mapping.write_text(json.dumps({
        "id": "id", "embedding": "embedding", "outcome": "outcome", "split": "split", "context": "context_id",
        "confounders": {"popularity": "popularity"},
    }))
    flat = tmp_path / "flat.jsonl"
    with open(flat, "w") as fh:
        for line in (entangled_data / "items.jsonl").read_text().splitlines():
            row = json.loads(line)
            row["popularity"] = row["confounders"]["popularity"]
            fh.write(json.dumps(row) + "\n")
    res = run("ingest", "--input", flat, "--format", "jsonl", "--mapping", mapping, "--out", tmp_path / "d")
    assert res.exit_code == 0, res.output
    back = fileio.read_dataset(tmp_path / "d")
    orig = fileio.read_dataset(entangled_data)
    assert validate(back) == []
    assert [(i.id, i.embedding, i.outcome) for i in back.items] == [(i.id, i.embedding, i.outcome) for i in orig.items]


def test_scenario_threads_do_not_change_bytes(tmp_path):
    cfg = _config(
        tmp_path,
        dgp={"scenario": "entangled", "n": 300, "seed": 0},
        eval={"seeds": [0, 1, 2], "n_candidate_sets": 20, "arms": ["naive_observed", "deconfound_iv"]},
    )
    for t in (1, 3):
        assert run("scenario", "--config", cfg, "--threads", t, "--out", tmp_path / f"t{t}").exit_code == 0
    names = sorted(p.name for p in (tmp_path / "t1").iterdir())
    assert names == ["entangled_arms_0-2.csv", "entangled_arms_0-2.json", "entangled_seeds_0-2.csv"]
    for name in names:
        assert _sha(tmp_path / "t1" / name) == _sha(tmp_path / "t3" / name)


def test_scenario_weekday_and_temporal(tmp_path):
    wk = _config(tmp_path, "wk.json", dgp={"scenario": "weekday_marker", "n": 150, "seed": 0}, eval={"seeds": [0, 1], "skew": 0.6})
    assert run("scenario", "--config", wk, "--out", tmp_path / "w").exit_code == 0
    rep = fileio.read_json(tmp_path / "w" / "weekday_marker_arms_0-1.json")
    assert rep["metadata"]["t_test_variant"] == "welch" and [r["arm"] for r in rep["rows"]] == ["naive", "deconfounded"]
    tp = _config(tmp_path, "tp.json", dgp={"scenario": "temporal", "n": 200, "seed": 0},
                 eval={"seeds": [3], "grid": "logspace(-2,0,3)"}, output={"dir": str(tmp_path / "t")})
    assert run("scenario", "--config", tp, "--seeds", "3").exit_code == 0
    assert (tmp_path / "t" / "temporal_sweep_3.csv").exists()
    assert (tmp_path / "t" / "temporal_summary_3.csv").exists()


def test_help_and_version():
    res = run("--help")
    assert res.exit_code == 0 and "coef_entangle=-10.5" in res.output
    assert __version__ in run("--version").output
