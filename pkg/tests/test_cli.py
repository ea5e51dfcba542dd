import json

import numpy as np
import pytest

from hedgebp.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from hedgebp.experiments import (
    ROBUSTNESS_DEPTHS,
    ConfigError,
    load_suite,
    parse_suite,
    preset_suite,
)
from hedgebp.streams import read_csv_stream, syn8


def experiment(name, kind="hbp", depth=3, length=400, **extra):
    d = {
        "name": name,
        "stream": {"recipe": "syn8", "length": length, "width": 8},
        "model": {"kind": kind, "depth": depth, "width": 8},
        "seeds": {"stream": 3, "init": 4},
        "alpha_log_stride": 50,
    }
    d.update(extra)
    return d


def write_config(tmp_path, experiments, **top):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps({"experiments": experiments, **top}))
    return path


def test_beta_out_of_range_names_field_and_constraint(tmp_path, capsys):
    path = write_config(tmp_path, [experiment("a", hyperparams={"beta": 1.5})])
    assert main(["run", str(path), "--output-dir", str(tmp_path / "out")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "experiments[0].hyperparams: beta must lie in (0, 1), got 1.5" in err
    assert not (tmp_path / "out").exists()


def test_validation_lists_every_violation():
    bad = experiment("a", hyperparams={"beta": 0, "s": 2})
    bad["seeds"] = {"stream": 1}
    dup = experiment("a", kind="ogd")
    dup["model"]["depth"] = 0
    with pytest.raises(ConfigError) as info:
        parse_suite({"experiments": [bad, dup], "parallelism": 0, "extra": 1})
    text = "\n".join(info.value.problems)
    for fragment in ("unknown key 'extra'", "duplicate experiment name 'a'", "parallelism",
                     "missing seed 'init'", "beta must lie", "s must lie", "experiments[1].model"):
        assert fragment in text


def test_model_stream_dimension_mismatch_rejected():
    e = experiment("a")
    e["model"]["input_dim"] = 7
    with pytest.raises(ConfigError, match="stream provides"):
        parse_suite({"experiments": [e]})


def test_unknown_model_kind_and_missing_stream():
    e = experiment("a", kind="svm")
    f = experiment("b")
    del f["stream"]
    with pytest.raises(ConfigError) as info:
        parse_suite({"experiments": [e, f]})
    text = "\n".join(info.value.problems)
    assert "experiments[0].model.kind" in text and "experiments[1]: missing 'stream'" in text


def test_two_experiment_suite(tmp_path):
    path = write_config(tmp_path, [experiment("hbp"), experiment("ogd", kind="ogd")])
    out = tmp_path / "out"
    assert main(["run", str(path), "--output-dir", str(out), "--log-level", "WARNING"]) == EXIT_OK
    for name in ("hbp", "ogd"):
        for suffix in ("rounds.csv", "alphas.csv", "summary.json"):
            assert (out / f"{name}.{suffix}").is_file()
    table = (out / "suite_table.csv").read_text().splitlines()
    assert table[0] == "method,layers,syn8"
    assert table[1].startswith("Hedge BP,3,") and table[2].startswith("OGD (Online BP),3,")
    summary = json.loads((out / "hbp.summary.json").read_text())
    assert summary["step_count"] == 400
    assert summary["config"]["model"]["kind"] == "hbp"


def test_rerun_is_byte_identical(tmp_path):
    path = write_config(tmp_path, [experiment("hbp"), experiment("mom", kind="ogd", hyperparams={"momentum": 0.9})])
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out, par in zip(outs, ("1", "2")):
        assert main(["run", str(path), "--output-dir", str(out), "--parallelism", par, "--log-level", "ERROR"]) == 0
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_runtime_failure_recorded_without_aborting_others(tmp_path, capsys):
    csv_path = tmp_path / "broken.csv"
    csv_path.write_text("0.1,0.2,1\n0.3,0.4,0\n0.5,oops,1\n")
    broken = {
        "name": "broken",
        "stream": {"csv": {"path": "broken.csv", "input_dim": 2, "num_classes": 2}},
        "model": {"kind": "ogd", "depth": 2, "width": 4},
        "seeds": {"stream": 0, "init": 0},
    }
    path = write_config(tmp_path, [broken, experiment("fine")])
    out = tmp_path / "out"
    assert main(["run", str(path), "--output-dir", str(out), "--log-level", "CRITICAL"]) == EXIT_RUNTIME
    assert "FAILED broken" in capsys.readouterr().err
    summary = (out / "suite_summary.csv").read_text()
    assert "broken,custom,OGD (Online BP),2,failed" in summary and "row 3" in summary
    assert (out / "fine.rounds.csv").is_file()
    assert not list(out.glob("broken.*"))


def test_csv_stream_in_config_runs(tmp_path):
    rows = "\n".join(f"{i % 3},{(i * 7) % 5},{i % 2}" for i in range(60))
    (tmp_path / "data.csv").write_text("a,b,y\n" + rows + "\n")
    e = {
        "name": "csvrun",
        "stream": {"csv": {"path": "data.csv", "input_dim": 2, "num_classes": 2, "header": True,
                           "feature_ranges": [[0, 2], [0, 4]]}},
        "model": {"kind": "hbp", "depth": 3, "width": 4},
        "seeds": {"stream": 0, "init": 0},
    }
    suite = load_suite(write_config(tmp_path, [e]))
    result = suite.experiments[0].run()
    assert result.step_count == 60


def test_gen_stream_round_trip(tmp_path):
    spec = tmp_path / "syn8.json"
    spec.write_text(json.dumps({"recipe": "syn8", "length": 1000, "seed": 5}))
    out = tmp_path / "syn8.csv"
    assert main(["gen-stream", str(spec), str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 1001
    assert len(lines[0].split(",")) == 51
    back = list(read_csv_stream(out, 50, 2, header=True))
    original = list(syn8(5, length=1000))
    assert len(back) == len(original)
    for (x1, y1), (x2, y2) in zip(back, original):
        assert y1 == y2
        np.testing.assert_array_equal(x1, x2)


def test_gen_stream_rejects_empty(tmp_path, capsys):
    spec = tmp_path / "zero.json"
    spec.write_text(json.dumps({"segments": [{"concept": {"input_dim": 4, "hidden_layers": 1, "width": 4},
                                              "count": 0}]}))
    assert main(["gen-stream", str(spec), str(tmp_path / "z.csv")]) == EXIT_INVALID
    assert "count must be >= 1" in capsys.readouterr().err
    assert not (tmp_path / "z.csv").exists()


def test_gen_stream_io_failure_names_path(tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"recipe": "syn8", "length": 10}))
    target = tmp_path / "missing_dir" / "out.csv"
    assert main(["gen-stream", str(spec), str(target)]) == EXIT_RUNTIME
    assert str(target) in capsys.readouterr().err


def test_replicate_depth_robustness_table(tmp_path):
    out = tmp_path / "rob"
    assert main(["replicate", "depth-robustness", "--length", "300", "--output-dir", str(out),
                 "--log-level", "WARNING"]) == EXIT_OK
    lines = (out / "depth_robustness.csv").read_text().splitlines()
    assert lines[0] == "depth,online_bp,hbp"
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(ROBUSTNESS_DEPTHS)


def test_replicate_alpha_evolution_windows(tmp_path):
    out = tmp_path / "ae"
    assert main(["replicate", "alpha-evolution", "--length", "1000", "--output-dir", str(out),
                 "--log-level", "WARNING"]) == EXIT_OK
    lines = (out / "alpha_windows.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["0-0.5%", "10-15%", "60-80%"]
    for line in lines[1:]:
        assert sum(float(v) for v in line.split(",")[1:]) == pytest.approx(1.0, abs=1e-9)


def test_main_table_preset_rows():
    suite = preset_suite("main-table", length=300)
    syn = [e for e in suite.experiments if e.dataset == "Syn8"]
    ogd_depths = [e.model.depth for e in syn if e.model.method == "OGD (Online BP)"]
    assert ogd_depths == [2, 3, 4, 8, 16, 20]
    methods = {e.model.method for e in syn}
    assert {"OGD+Momentum", "OGD+Nesterov", "Hedge BP", "Linear OGD"} <= methods
    assert {e.dataset for e in suite.experiments} == {"Syn8", "CD1", "CD2"}
    assert all(e.model.hyperparams.eta == 0.001 for e in syn if e.model.method in ("OGD+Momentum", "OGD+Nesterov"))


def test_unknown_preset_rejected():
    with pytest.raises(SystemExit) as info:
        main(["replicate", "nope"])
    assert info.value.code == EXIT_INVALID
    with pytest.raises(ValueError, match="unknown preset"):
        preset_suite("nope")
