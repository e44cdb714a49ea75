import json

import pytest
from click.testing import CliRunner

from claimbench.cli import main
from helpers import TOY_CONFIG, write_toy_workspace

ALL_STAGES = ("ingest", "perturb", "index", "retrieve", "rerank", "eval",
              "normalize", "pairs", "report")


@pytest.fixture()
def runner():
    return CliRunner()


def _invoke(runner, stage, config_path, *extra):
    return runner.invoke(main, [stage, "--config", str(config_path), *extra])


def _run_all(runner, config_path, stages=ALL_STAGES):
    results = {}
    for stage in stages:
        result = _invoke(runner, stage, config_path)
        assert result.exit_code == 0, f"{stage} failed: {result.output}"
        results[stage] = result
    return results


def test_full_pipeline_produces_artifacts(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    _run_all(runner, config_path)
    out = tmp_path / "out"
    expected = [
        "dataset/claims.jsonl", "dataset/factchecks.jsonl", "dataset/qrels.tsv",
        "dataset/split.json", "dataset/ingest.manifest.json",
        "perturb/perturbations.jsonl", "perturb/counts.csv", "perturb/overlap.csv",
        "perturb/perturb.manifest.json",
        "index/bm25.json", "index/index.manifest.json",
        "runs/first_stage/unperturbed.trec", "runs/retrieve.manifest.json",
        "runs/reranked/unperturbed.trec", "runs/rerank.manifest.json",
        "eval/report.csv", "eval/eval.manifest.json", "eval/report.md",
        "normalize/normalized.jsonl", "normalize/normalize.manifest.json",
        "pairs/pairs.tsv", "pairs/triples.tsv", "pairs/pairs.manifest.json",
    ]
    for rel in expected:
        assert (out / rel).exists(), f"missing artifact {rel}"
    for family, variant in (("casing", "upper"), ("typos", "most"), ("negation", "double")):
        assert (out / f"runs/first_stage/{family}_{variant}.trec").exists()
        assert (out / f"runs/reranked/{family}_{variant}.trec").exists()
    report = (out / "eval/report.csv").read_text().splitlines()
    assert report[0] == "variant,stage,k,subset_size,map_unperturbed,map_perturbed,delta_pp"
    # 6 variants x 3 ks x 3 stages
    assert len(report) == 1 + 6 * 9


def test_stages_are_resumable(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    _run_all(runner, config_path)
    for stage in ALL_STAGES:
        result = _invoke(runner, stage, config_path)
        assert result.exit_code == 0
        assert "up to date" in result.output


def test_stage_reruns_when_inputs_change(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    _run_all(runner, config_path, stages=("ingest", "perturb", "index", "retrieve",
                                          "rerank", "eval"))
    result = _invoke(runner, "eval", config_path, "--k", "3")
    assert result.exit_code == 0
    assert "up to date" not in result.output
    report = (tmp_path / "out/eval/report.csv").read_text().splitlines()
    ks = {line.split(",")[2] for line in report[1:]}
    assert ks == {"3"}


def test_config_error_exit_code(tmp_path, runner):
    config_path = tmp_path / "run.yaml"
    config_path.write_text("dataset:\n  claims: c\n  factchecks: f\n  qrels: q\nbogus: 1\n")
    result = _invoke(runner, "ingest", config_path)
    assert result.exit_code == 2
    assert "config error" in result.output
    assert "unknown config key bogus" in result.output


def test_missing_dataset_file_exit_code(tmp_path, runner):
    config_path = tmp_path / "run.yaml"
    config_path.write_text(
        "dataset:\n  claims: nope.jsonl\n  factchecks: nope.jsonl\n  qrels: nope.tsv\n")
    result = _invoke(runner, "ingest", config_path)
    assert result.exit_code == 3
    assert "data error" in result.output


def test_missing_upstream_artifact_exit_code(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    result = _invoke(runner, "ingest", config_path)
    assert result.exit_code == 0
    result = _invoke(runner, "retrieve", config_path)
    assert result.exit_code == 3
    assert "perturb/perturbations.jsonl" in result.output
    assert "claimbench perturb" in result.output


def test_provider_error_exit_code(tmp_path, runner):
    config = TOY_CONFIG.replace(
        "provider:\n  kind: mock\n  parallelism: 4\n",
        "provider:\n  kind: http\n  endpoint: http://127.0.0.1:9/v1/chat\n  timeout: 0.2\n",
    )
    config_path = write_toy_workspace(tmp_path, config_text=config)
    assert _invoke(runner, "ingest", config_path).exit_code == 0
    result = _invoke(runner, "perturb", config_path)
    assert result.exit_code == 4
    assert "provider error" in result.output


def test_malformed_dataset_exit_code(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    claims = tmp_path / "data/claims.jsonl"
    claims.write_text(claims.read_text() + "{broken json\n")
    result = _invoke(runner, "ingest", config_path)
    assert result.exit_code == 3
    assert "malformed JSON" in result.output


def test_ingest_generates_split_when_not_provided(tmp_path, runner):
    config = TOY_CONFIG.replace("  split: data/split.json\n", "")
    config_path = write_toy_workspace(tmp_path, config_text=config)
    result = _invoke(runner, "ingest", config_path)
    assert result.exit_code == 0
    split = json.loads((tmp_path / "out/dataset/split.json").read_text())
    assert sorted(split["train"] + split["dev"] + split["test"]) == \
        [f"c{i:02d}" for i in range(1, 13)]
    assert len(split["dev"]) == 1 and len(split["test"]) == 1


def test_seed_override_invalidates_perturb(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    _run_all(runner, config_path, stages=("ingest", "perturb"))
    again = _invoke(runner, "perturb", config_path, "--seed", "8")
    assert again.exit_code == 0
    assert "up to date" not in again.output


def test_dense_pipeline_runs(tmp_path, runner):
    config = TOY_CONFIG.replace("  method: bm25\n", "  method: dense\n  granularity: paragraph\n")
    config_path = write_toy_workspace(tmp_path, config_text=config)
    _run_all(runner, config_path, stages=("ingest", "perturb", "index", "retrieve",
                                          "rerank", "eval"))
    assert (tmp_path / "out/index/vectors.bin").exists()
    first_line = (tmp_path / "out/runs/first_stage/unperturbed.trec").read_text().splitlines()[0]
    assert first_line.split()[5] == "mock-embed.first_stage"


def test_report_renders_markdown(tmp_path, runner):
    config_path = write_toy_workspace(tmp_path)
    _run_all(runner, config_path)
    text = (tmp_path / "out/eval/report.md").read_text()
    assert text.startswith("## First-stage retrieval gap")
    assert "casing:upper" in text
