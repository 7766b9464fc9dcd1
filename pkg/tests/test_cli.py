import json

import pytest
import requests

from boRank.cli import build_parser, eval_settings, main, sweep_overrides, sweep_tag
from boRank.config import load_config
from boRank.utils.errors import ConfigError
from helpers import FakeResponse, chat_payload


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("synth")
    assert main(["synth", str(directory), "--background", "180", "--cluster-size", "10", "--clumps", "1"]) == 0
    return directory


@pytest.fixture
def config_path(synth_dir):
    return str(synth_dir / "experiment.json")


def run(config_path, output_dir, *extra):
    assert main(["run", config_path, "-q", "--output-dir", str(output_dir), *extra]) == 0
    return output_dir / "synthetic.run"


def test_synth_writes_loadable_config(config_path):
    config = load_config(config_path)
    assert config.method.name == "bo"
    assert config.oracle.kind.value == "synthetic"


def test_validate(config_path, capsys):
    assert main(["validate", config_path]) == 0
    out = capsys.readouterr().out
    assert "documents: 200" in out
    assert "queries: 1" in out


@pytest.mark.parametrize("oracle", ["synthetic", "simulated-qrels"])
def test_run_is_reproducible(config_path, tmp_path, oracle):
    first = run(config_path, tmp_path / "a", "--set", f"oracle.kind={oracle}")
    second = run(config_path, tmp_path / "b", "--set", f"oracle.kind={oracle}")
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a" / "synthetic.traces" / "q1.jsonl").read_bytes() == \
        (tmp_path / "b" / "synthetic.traces" / "q1.jsonl").read_bytes()
    lines = first.read_text().splitlines()
    assert len(lines) == 100
    assert lines[0].startswith("q1 Q0 ")
    timings = json.loads((tmp_path / "a" / "synthetic.timings.json").read_text())
    assert timings["oracle_calls"] == 10
    assert timings["failed"] == {}


def test_run_then_eval(config_path, synth_dir, tmp_path, capsys):
    run_path = run(config_path, tmp_path, "--set", "method.session.budget=30")
    assert main(["run", config_path, "-q", "--output-dir", str(tmp_path), "--set", "method.name=dense",
                 "--run-tag", "dense"]) == 0
    dense_path = tmp_path / "dense.run"
    capsys.readouterr()
    report = tmp_path / "report.json"
    assert main(["eval", str(run_path), str(dense_path), "--qrels", str(synth_dir / "qrels.tsv"),
                 "--ks", "10", "100", "--json", str(report)]) == 0
    out = capsys.readouterr().out
    assert "R@100" in out and "N@10" in out
    data = json.loads(report.read_text())
    assert set(data) == {"synthetic", "dense"}
    # dense top-100 holds the query's cluster and clump documents only
    assert data["dense"][synth_dir.name]["R@100"] == pytest.approx(0.5)
    assert "seconds_total" in data["synthetic"][synth_dir.name]


def test_eval_missing_qrels(config_path, tmp_path):
    run_path = run(config_path, tmp_path)
    assert main(["eval", str(run_path), "--qrels", str(tmp_path / "nope.tsv")]) == 1


def test_validate_names_missing_embedding(synth_dir, tmp_path, capsys):
    config = json.loads((synth_dir / "experiment.json").read_text())
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text((synth_dir / "corpus.jsonl").read_text()
                      + json.dumps({"_id": "orphan", "title": "", "text": "no vector"}) + "\n")
    config["dataset"]["corpus"] = str(corpus)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config))
    assert main(["validate", str(path)]) == 1
    assert "'orphan'" in capsys.readouterr().err


def test_validate_empty_queries(synth_dir, tmp_path, capsys):
    config = json.loads((synth_dir / "experiment.json").read_text())
    queries = tmp_path / "queries.jsonl"
    queries.write_text("")
    config["dataset"]["queries"] = str(queries)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config))
    assert main(["validate", str(path)]) == 1
    assert "no queries" in capsys.readouterr().err


def test_bad_override(config_path, tmp_path):
    assert main(["run", config_path, "-q", "--output-dir", str(tmp_path), "--set", "method.name=magic"]) == 1


def test_sweep(config_path, tmp_path):
    assert main(["sweep", config_path, "-q", "--output-dir", str(tmp_path),
                 "--grid", "method.session.batch_size=5,10", "--set", "method.session.budget=20"]) == 0
    assert (tmp_path / "synthetic_batch_size-5.run").exists()
    assert (tmp_path / "synthetic_batch_size-10.run").exists()
    timings = json.loads((tmp_path / "synthetic_batch_size-5.timings.json").read_text())
    assert timings["oracle_calls"] == 4


def test_sweep_overrides():
    assert sweep_overrides(["a.b=1,2", "c=x,y"]) == [["a.b=1", "c=x"], ["a.b=1", "c=y"],
                                                     ["a.b=2", "c=x"], ["a.b=2", "c=y"]]


def test_reformulate(config_path, tmp_path, monkeypatch):
    reply = FakeResponse(chat_payload('["cluster A documents", "documents near A"]'))
    monkeypatch.setattr(requests.Session, "post", lambda self, url, **kwargs: reply)
    output = tmp_path / "refs.jsonl"
    assert main(["reformulate", config_path, "--count", "2", "--output", str(output),
                 "--set", "oracle.kind=llm-http", "--set", "oracle.endpoint=http://llm.test/v1/chat/completions"]) == 0
    rows = [json.loads(line) for line in output.read_text().splitlines()]
    assert rows == [{"query_id": "q1", "reformulations": ["cluster A documents", "documents near A"]}]


def test_reformulate_needs_endpoint(config_path, tmp_path):
    assert main(["reformulate", config_path, "--output", str(tmp_path / "refs.jsonl")]) == 1


def test_eval_always_reports_ndcg_at_10(config_path, synth_dir, tmp_path, capsys):
    assert main(["run", config_path, "-q", "--output-dir", str(tmp_path), "--set", "method.name=dense",
                 "--run-tag", "dense"]) == 0
    capsys.readouterr()
    report = tmp_path / "report.json"
    assert main(["eval", str(tmp_path / "dense.run"), "--qrels", str(synth_dir / "qrels.tsv"), "--ks", "100",
                 "--ndcg-ks", "5", "--json", str(report)]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert "N@5" in header and "N@10" in header
    means = json.loads(report.read_text())["dense"][synth_dir.name]
    assert {"R@100", "N@5", "N@10"} <= set(means)
    assert 0.0 < means["N@10"] <= 1.0


@pytest.fixture
def linear_config(synth_dir, tmp_path):
    config = json.loads((synth_dir / "experiment.json").read_text())
    config.update({"ks": [10], "ndcg_ks": [5], "gain": "linear"})
    path = tmp_path / "linear.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_eval_settings_from_config(linear_config, synth_dir):
    settings = eval_settings(build_parser().parse_args(["eval", "x.run", "--config", linear_config]))
    assert settings["ks"] == [10]
    assert settings["ndcg_ks"] == [5, 10]
    assert settings["gain"] == "linear"
    assert settings["qrels"] == str(synth_dir / "qrels.tsv")
    assert settings["dataset"] == "synthetic"


def test_eval_flags_beat_config(linear_config):
    args = build_parser().parse_args(["eval", "x.run", "--config", linear_config, "--ks", "20", "50",
                                      "--gain", "exponential", "--dataset", "toy"])
    settings = eval_settings(args)
    assert settings["ks"] == [20, 50]
    assert settings["gain"] == "exponential"
    assert settings["dataset"] == "toy"


def test_eval_settings_defaults(synth_dir):
    settings = eval_settings(build_parser().parse_args(["eval", "x.run", "--qrels", str(synth_dir / "qrels.tsv")]))
    assert settings["ks"] == [50, 100, 200]
    assert settings["ndcg_ks"] == [10]
    assert settings["gain"] == "exponential"
    assert settings["qrels_format"] == "beir-tsv"


def test_eval_with_config_only(linear_config, config_path, tmp_path):
    run_path = run(config_path, tmp_path)
    report = tmp_path / "report.json"
    assert main(["eval", str(run_path), "--config", linear_config, "--json", str(report)]) == 0
    assert set(json.loads(report.read_text())["synthetic"]["synthetic"]) >= {"R@10", "N@5", "N@10"}


def test_eval_without_qrels(tmp_path):
    assert main(["eval", str(tmp_path / "x.run")]) == 1


def test_config_rejects_unknown_gain(linear_config):
    with pytest.raises(ConfigError, match="gain"):
        load_config(linear_config, ["gain=cubic"])


def test_sweep_overrides_json_list():
    assert sweep_overrides(['oracle.response_path=[["choices", 0], ["output"]]', "seed=1,2"]) == [
        ['oracle.response_path=["choices", 0]', "seed=1"], ['oracle.response_path=["choices", 0]', "seed=2"],
        ['oracle.response_path=["output"]', "seed=1"], ['oracle.response_path=["output"]', "seed=2"]]
    with pytest.raises(ConfigError):
        sweep_overrides(["method.session.budget"])


def test_sweep_tag():
    assert sweep_tag("bo", ["method.session.batch_size=5"]) == "bo_batch_size-5"
    assert sweep_tag("bo", ['oracle.response_path=["choices", 0]']) == "bo_response_path-choices0"
