"""Batch pipeline CLI: ingest, perturb, index, retrieve, rerank, eval, and exports.

Every stage reads one YAML config, writes its artifacts plus a JSON manifest
under the configured output directory, and is hash-guarded: rerunning a
stage whose inputs have not changed is a no-op. Manifests hold no
timestamps or absolute paths, so two runs over the same inputs produce
byte-identical artifacts.

Exit codes: 0 success, 2 config error, 3 data error, 4 provider error.
"""

import csv
import json
import os
import sys
from typing import Dict, Optional, Sequence

import click

from .config import (ConfigError, RunConfig, file_sha256, load_config, raw_section,
                     read_manifest, signature_of, stage_is_current, write_manifest)
from .corpus import (DataError, Dataset, DatasetSplit, RelevanceJudgments, load_dataset,
                     load_split, save_dataset, save_qrels, save_split, split_dataset)
from .metrics import (VariantRuns, compute_gap_report, read_report_csv, render_report)
from .mitigate import (build_parallel_pairs, build_training_triples, export_training_data,
                       normalize_claim)
from .perturb import (PerturbationSet, overlap_statistics, perturb_dataset,
                      read_perturbations, write_perturbations)
from .provider import Embedder, ProviderError, RerankScorer, build_provider
from .rerank import rerank_run
from .retrieve import (build_bm25, build_vector_index, first_stage_run, load_bm25,
                       load_vector_index, read_run, save_bm25, save_vector_index, write_run)

_DATASET_FILES = {
    "claims": "dataset/claims.jsonl",
    "factchecks": "dataset/factchecks.jsonl",
    "qrels": "dataset/qrels.tsv",
    "split": "dataset/split.json",
}
_PERTURBATIONS = "perturb/perturbations.jsonl"
_COUNTS = "perturb/counts.csv"
_OVERLAP = "perturb/overlap.csv"
_BM25_INDEX = "index/bm25.json"
_VECTOR_INDEX = "index/vectors.bin"
_FIRST_STAGE_DIR = "runs/first_stage"
_RERANKED_DIR = "runs/reranked"
_REPORT_CSV = "eval/report.csv"
_REPORT_MD = "eval/report.md"
_NORMALIZED = "normalize/normalized.jsonl"
_PAIRS_TSV = "pairs/pairs.tsv"
_TRIPLES_TSV = "pairs/triples.tsv"


def _fail(code: int, message: str) -> None:
    click.echo(message, err=True)
    sys.exit(code)


def _execute(stage_fn, config_path: str, seed: Optional[int], ks: Sequence[int],
             j: Optional[int], out: Optional[str]) -> None:
    try:
        cfg = load_config(config_path, seed=seed, out=out, k=list(ks) or None, j=j)
        stage_fn(cfg)
    except ConfigError as exc:
        _fail(2, f"config error: {exc}")
    except DataError as exc:
        _fail(3, f"data error: {exc}")
    except ProviderError as exc:
        _fail(4, f"provider error: {exc}")
    except OSError as exc:
        _fail(3, f"data error: {exc}")


def _pipeline_options(fn):
    for option in reversed((
        click.option("--config", "config_path", required=True,
                     type=click.Path(), help="Path to the run configuration YAML."),
        click.option("--seed", type=int, default=None, help="Override the run seed."),
        click.option("--k", "ks", type=int, multiple=True,
                     help="Override eval.k (repeatable)."),
        click.option("--j", type=int, default=None,
                     help="Override retrieval/rerank depth j."),
        click.option("--out", type=click.Path(), default=None,
                     help="Override the output directory."),
    )):
        fn = option(fn)
    return fn


def _out(cfg: RunConfig, rel: str) -> str:
    return os.path.join(cfg.out, rel)


def _prepare_dir(cfg: RunConfig, rel: str) -> str:
    path = _out(cfg, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def _require_artifact(cfg: RunConfig, rel: str, producer: str) -> str:
    path = _out(cfg, rel)
    if not os.path.exists(path):
        raise DataError(f"missing artifact {rel}; run 'claimbench {producer}' first")
    return path


def _dataset_hashes(cfg: RunConfig) -> Dict[str, str]:
    return {name: file_sha256(_require_artifact(cfg, rel, "ingest"))
            for name, rel in _DATASET_FILES.items()}


def _load_workspace(cfg: RunConfig):
    for rel in _DATASET_FILES.values():
        _require_artifact(cfg, rel, "ingest")
    dataset, qrels = load_dataset(_out(cfg, _DATASET_FILES["claims"]),
                                  _out(cfg, _DATASET_FILES["factchecks"]),
                                  _out(cfg, _DATASET_FILES["qrels"]))
    split = load_split(_out(cfg, _DATASET_FILES["split"]), dataset)
    return dataset, qrels, split


def _split_claims(cfg: RunConfig, dataset: Dataset, split: DatasetSplit):
    which = cfg.perturb.split
    if which == "all":
        ids = list(split.train) + list(split.dev) + list(split.test)
    else:
        ids = list(getattr(split, which))
    return [dataset.claims[claim_id] for claim_id in ids]


def _judged(claims, qrels: RelevanceJudgments):
    return [claim for claim in claims if qrels.get(claim.id)]


def _run_name(pset: PerturbationSet) -> str:
    return f"{pset.family.value}_{pset.variant}"


@click.group()
def main():
    """Robustness harness for claim-matching retrieval pipelines."""


def _register(name: str, stage_fn, help_text: str) -> None:
    @main.command(name=name, help=help_text)
    @_pipeline_options
    def _command(config_path, seed, ks, j, out, _stage_fn=stage_fn):
        _execute(_stage_fn, config_path, seed, ks, j, out)


def cmd_ingest(cfg: RunConfig) -> None:
    dataset, qrels = load_dataset(cfg.dataset.claims, cfg.dataset.factchecks,
                                  cfg.dataset.qrels)
    if cfg.dataset.split:
        split = load_split(cfg.dataset.split, dataset)
    else:
        split = split_dataset(list(dataset.claims), cfg.dataset.ratios, cfg.seed)
    signature = signature_of({
        "stage": "ingest",
        "config": raw_section(cfg, "dataset"),
        "seed": cfg.seed,
        "inputs": {
            "claims": file_sha256(cfg.dataset.claims),
            "factchecks": file_sha256(cfg.dataset.factchecks),
            "qrels": file_sha256(cfg.dataset.qrels),
            "split": file_sha256(cfg.dataset.split) if cfg.dataset.split else None,
        },
    })
    manifest_path = _out(cfg, "dataset/ingest.manifest.json")
    outputs = list(_DATASET_FILES.values())
    if stage_is_current(manifest_path, signature, cfg.out, outputs):
        click.echo("ingest: up to date")
        return
    _prepare_dir(cfg, _DATASET_FILES["claims"])
    save_dataset(dataset, _out(cfg, _DATASET_FILES["claims"]),
                 _out(cfg, _DATASET_FILES["factchecks"]))
    save_qrels(qrels, _out(cfg, _DATASET_FILES["qrels"]))
    save_split(split, _out(cfg, _DATASET_FILES["split"]))
    counts = {
        "claims": len(dataset.claims),
        "fact_checks": len(dataset.fact_checks),
        "judged_claims": sum(1 for claim_id in dataset.claims if qrels.get(claim_id)),
        "split": {"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
    }
    write_manifest(manifest_path, {
        "stage": "ingest", "signature": signature, "seed": cfg.seed,
        "outputs": dict(_DATASET_FILES), "counts": counts,
    })
    click.echo(f"ingest: {counts['claims']} claims, {counts['fact_checks']} fact-checks, "
               f"{counts['judged_claims']} judged "
               f"(train {counts['split']['train']} / dev {counts['split']['dev']} "
               f"/ test {counts['split']['test']})")


def cmd_perturb(cfg: RunConfig) -> None:
    dataset, qrels, split = _load_workspace(cfg)
    signature = signature_of({
        "stage": "perturb",
        "config": {"perturb": raw_section(cfg, "perturb"),
                   "provider": raw_section(cfg, "provider")},
        "seed": cfg.seed,
        "inputs": _dataset_hashes(cfg),
    })
    manifest_path = _out(cfg, "perturb/perturb.manifest.json")
    outputs = [_PERTURBATIONS, _COUNTS, _OVERLAP]
    if stage_is_current(manifest_path, signature, cfg.out, outputs):
        click.echo("perturb: up to date")
        return
    client = build_provider(cfg.provider, cfg.seed)
    claims = _split_claims(cfg, dataset, split)
    batch = perturb_dataset(claims, qrels, dataset, cfg.perturb.families, client,
                            cfg.provider.model, seed=cfg.seed, n=cfg.perturb.candidates)
    _prepare_dir(cfg, _PERTURBATIONS)
    write_perturbations(batch, _out(cfg, _PERTURBATIONS))
    with open(_out(cfg, _COUNTS), "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["variant", "count"])
        for pset in batch.sets:
            writer.writerow([pset.label, len(pset.entries)])
    originals = {claim.id: claim.text for claim in claims}
    with open(_out(cfg, _OVERLAP), "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["variant", "count", "rouge1", "rouge2", "rouge_l",
                         "lev_word", "lev_char"])
        for pset in batch.sets:
            if not pset.entries:
                continue
            stats = overlap_statistics(pset, originals)
            writer.writerow([stats.variant, stats.count,
                             f"{stats.rouge1:.4f}", f"{stats.rouge2:.4f}",
                             f"{stats.rouge_l:.4f}", f"{stats.lev_word:.6f}",
                             f"{stats.lev_char:.6f}"])
    write_manifest(manifest_path, {
        "stage": "perturb", "signature": signature, "seed": cfg.seed,
        "prompt_version": batch.sets[0].provenance.prompt_version if batch.sets else None,
        "model": cfg.provider.model,
        "outputs": {"perturbations": _PERTURBATIONS, "counts": _COUNTS, "overlap": _OVERLAP},
        "counts": batch.counts(),
        "eligible_claims": len(_judged(claims, qrels)),
        "failures": [{"claim_id": f.claim_id, "family": f.family.value,
                      "variant": f.variant, "reason": f.reason} for f in batch.failures],
    })
    total_valid = sum(batch.counts().values())
    click.echo(f"perturb: {len(_judged(claims, qrels))} claims, {len(batch.sets)} variants, "
               f"{total_valid} valid perturbations, {len(batch.failures)} failures")


def cmd_index(cfg: RunConfig) -> None:
    dataset, _, _ = _load_workspace(cfg)
    payload = {
        "stage": "index",
        "config": raw_section(cfg, "retrieve"),
        "inputs": _dataset_hashes(cfg),
    }
    if cfg.retrieve.method == "dense":
        payload["config"] = {"retrieve": raw_section(cfg, "retrieve"),
                             "provider": raw_section(cfg, "provider")}
    signature = signature_of(payload)
    rel = _BM25_INDEX if cfg.retrieve.method == "bm25" else _VECTOR_INDEX
    manifest_path = _out(cfg, "index/index.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, [rel]):
        click.echo("index: up to date")
        return
    _prepare_dir(cfg, rel)
    if cfg.retrieve.method == "bm25":
        index = build_bm25(dataset.fact_checks, k1=cfg.retrieve.k1, b=cfg.retrieve.b)
        save_bm25(index, _out(cfg, rel))
        counts = {"documents": index.n_docs, "terms": len(index.doc_freq)}
    else:
        client = build_provider(cfg.provider, cfg.seed)
        embedder = Embedder(client, cfg.provider.embedding_model)
        index = build_vector_index(dataset.fact_checks, embedder,
                                   granularity=cfg.retrieve.granularity)
        save_vector_index(index, _out(cfg, rel))
        counts = {"passages": len(index.fact_check_ids), "dimension": index.dimension}
    write_manifest(manifest_path, {
        "stage": "index", "signature": signature, "method": cfg.retrieve.method,
        "outputs": {"index": rel}, "counts": counts,
    })
    click.echo(f"index: {cfg.retrieve.method} over {len(dataset.fact_checks)} fact-checks")


def _load_index(cfg: RunConfig):
    if cfg.retrieve.method == "bm25":
        return load_bm25(_require_artifact(cfg, _BM25_INDEX, "index")), None
    index = load_vector_index(_require_artifact(cfg, _VECTOR_INDEX, "index"))
    client = build_provider(cfg.provider, cfg.seed)
    return index, Embedder(client, cfg.provider.embedding_model)


def cmd_retrieve(cfg: RunConfig) -> None:
    dataset, qrels, split = _load_workspace(cfg)
    perturbations_path = _require_artifact(cfg, _PERTURBATIONS, "perturb")
    index_rel = _BM25_INDEX if cfg.retrieve.method == "bm25" else _VECTOR_INDEX
    index_path = _require_artifact(cfg, index_rel, "index")
    config_slice = {"retrieve": raw_section(cfg, "retrieve")}
    if cfg.retrieve.method == "dense":
        config_slice["provider"] = raw_section(cfg, "provider")
    signature = signature_of({
        "stage": "retrieve",
        "config": config_slice,
        "seed": cfg.seed,
        "inputs": {"perturbations": file_sha256(perturbations_path),
                   "index": file_sha256(index_path), **_dataset_hashes(cfg)},
    })
    psets = [pset for pset in read_perturbations(perturbations_path) if pset.entries]
    names = ["unperturbed"] + [_run_name(pset) for pset in psets]
    outputs = [f"{_FIRST_STAGE_DIR}/{name}.trec" for name in names]
    manifest_path = _out(cfg, "runs/retrieve.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, outputs):
        click.echo("retrieve: up to date")
        return
    index, embedder = _load_index(cfg)
    claims = _judged(_split_claims(cfg, dataset, split), qrels)
    if not claims:
        raise DataError("no judged claims in the configured split to retrieve for")
    os.makedirs(_out(cfg, _FIRST_STAGE_DIR), exist_ok=True)
    run = first_stage_run([(c.id, c.text) for c in claims], index,
                          j=cfg.retrieve.j, embedder=embedder)
    write_run(run, _out(cfg, f"{_FIRST_STAGE_DIR}/unperturbed.trec"))
    for pset in psets:
        queries = [(entry.claim_id, entry.text) for entry in pset.entries]
        variant_run = first_stage_run(queries, index, j=cfg.retrieve.j, embedder=embedder)
        write_run(variant_run, _out(cfg, f"{_FIRST_STAGE_DIR}/{_run_name(pset)}.trec"))
    write_manifest(manifest_path, {
        "stage": "retrieve", "signature": signature, "seed": cfg.seed,
        "method": cfg.retrieve.method, "j": cfg.retrieve.j,
        "outputs": {name: f"{_FIRST_STAGE_DIR}/{name}.trec" for name in names},
        "counts": {"claims": len(claims), "variants": len(psets)},
    })
    click.echo(f"retrieve: {len(names)} runs over {len(claims)} claims "
               f"(j={cfg.retrieve.j}, {cfg.retrieve.method})")


def cmd_rerank(cfg: RunConfig) -> None:
    dataset, qrels, split = _load_workspace(cfg)
    perturbations_path = _require_artifact(cfg, _PERTURBATIONS, "perturb")
    retrieve_manifest = read_manifest(_out(cfg, "runs/retrieve.manifest.json"))
    if retrieve_manifest is None:
        raise DataError("missing artifact runs/retrieve.manifest.json; "
                        "run 'claimbench retrieve' first")
    first_stage = retrieve_manifest.get("outputs", {})
    input_hashes = {name: file_sha256(_require_artifact(cfg, rel, "retrieve"))
                    for name, rel in sorted(first_stage.items())}
    signature = signature_of({
        "stage": "rerank",
        "config": {"rerank": raw_section(cfg, "rerank"),
                   "provider": raw_section(cfg, "provider")},
        "seed": cfg.seed,
        "inputs": {**input_hashes, "perturbations": file_sha256(perturbations_path)},
    })
    outputs = [f"{_RERANKED_DIR}/{name}.trec" for name in sorted(first_stage)]
    manifest_path = _out(cfg, "runs/rerank.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, outputs):
        click.echo("rerank: up to date")
        return
    client = build_provider(cfg.provider, cfg.seed)
    scorer = RerankScorer(client, cfg.provider.rerank_model)
    fact_check_texts = {fc.id: fc.text for fc in dataset.fact_checks.values()}
    claim_texts = {claim.id: claim.text for claim in dataset.claims.values()}
    variant_texts = {_run_name(pset): {entry.claim_id: entry.text for entry in pset.entries}
                     for pset in read_perturbations(perturbations_path)}
    os.makedirs(_out(cfg, _RERANKED_DIR), exist_ok=True)
    failures = {}
    for name, rel in sorted(first_stage.items()):
        run = read_run(_out(cfg, rel))
        queries = claim_texts if name == "unperturbed" else variant_texts.get(name, {})
        result = rerank_run(run, queries, fact_check_texts, scorer, j=cfg.rerank.j)
        write_run(result.run, _out(cfg, f"{_RERANKED_DIR}/{name}.trec"))
        if result.failed_claims:
            failures[name] = result.failed_claims
    write_manifest(manifest_path, {
        "stage": "rerank", "signature": signature, "seed": cfg.seed, "j": cfg.rerank.j,
        "model": cfg.provider.rerank_model,
        "outputs": {name: f"{_RERANKED_DIR}/{name}.trec" for name in sorted(first_stage)},
        "failures": failures,
    })
    click.echo(f"rerank: {len(first_stage)} runs (j={cfg.rerank.j}), "
               f"{sum(len(v) for v in failures.values())} claim failures")


def cmd_eval(cfg: RunConfig) -> None:
    _, qrels, _ = _load_workspace(cfg)
    perturbations_path = _require_artifact(cfg, _PERTURBATIONS, "perturb")
    u_first_path = _require_artifact(cfg, f"{_FIRST_STAGE_DIR}/unperturbed.trec", "retrieve")
    u_reranked_path = _require_artifact(cfg, f"{_RERANKED_DIR}/unperturbed.trec", "rerank")
    psets = [pset for pset in read_perturbations(perturbations_path) if pset.entries]
    variant_paths = {}
    for pset in psets:
        name = _run_name(pset)
        variant_paths[pset.label] = (
            _require_artifact(cfg, f"{_FIRST_STAGE_DIR}/{name}.trec", "retrieve"),
            _require_artifact(cfg, f"{_RERANKED_DIR}/{name}.trec", "rerank"),
            set(pset.valid_claim_ids()),
        )
    hashes = {"unperturbed_first": file_sha256(u_first_path),
              "unperturbed_reranked": file_sha256(u_reranked_path)}
    for label, (first_path, reranked_path, _) in sorted(variant_paths.items()):
        hashes[f"{label}:first"] = file_sha256(first_path)
        hashes[f"{label}:reranked"] = file_sha256(reranked_path)
    signature = signature_of({
        "stage": "eval",
        "config": raw_section(cfg, "eval"),
        "inputs": {**hashes, "perturbations": file_sha256(perturbations_path)},
    })
    manifest_path = _out(cfg, "eval/eval.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, [_REPORT_CSV]):
        click.echo("eval: up to date")
        return
    variants = {label: VariantRuns(first=read_run(first_path),
                                   reranked=read_run(reranked_path),
                                   valid_claims=valid)
                for label, (first_path, reranked_path, valid) in variant_paths.items()}
    report = compute_gap_report(read_run(u_first_path), read_run(u_reranked_path),
                                variants, qrels, ks=cfg.eval.k)
    _prepare_dir(cfg, _REPORT_CSV)
    with open(_out(cfg, _REPORT_CSV), "w", encoding="utf-8", newline="\n") as handle:
        handle.write(render_report(report, "csv"))
    write_manifest(manifest_path, {
        "stage": "eval", "signature": signature, "k": list(cfg.eval.k),
        "outputs": {"report": _REPORT_CSV},
        "counts": {"variants": len(variants), "rows": len(report.rows)},
    })
    click.echo(f"eval: {len(report.rows)} gap rows over {len(variants)} variants "
               f"at k={list(cfg.eval.k)}")


def cmd_normalize(cfg: RunConfig) -> None:
    perturbations_path = _require_artifact(cfg, _PERTURBATIONS, "perturb")
    signature = signature_of({
        "stage": "normalize",
        "config": raw_section(cfg, "provider"),
        "inputs": {"perturbations": file_sha256(perturbations_path)},
    })
    manifest_path = _out(cfg, "normalize/normalize.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, [_NORMALIZED]):
        click.echo("normalize: up to date")
        return
    client = build_provider(cfg.provider, cfg.seed)
    statuses: Dict[str, int] = {}
    _prepare_dir(cfg, _NORMALIZED)
    with open(_out(cfg, _NORMALIZED), "w", encoding="utf-8", newline="\n") as handle:
        for pset in read_perturbations(perturbations_path):
            for entry in pset.entries:
                normalized = normalize_claim(entry.text, client, cfg.provider.model)
                statuses[normalized.status] = statuses.get(normalized.status, 0) + 1
                handle.write(json.dumps({
                    "claim_id": entry.claim_id, "family": entry.family.value,
                    "variant": entry.variant, "text": normalized.text,
                    "status": normalized.status,
                }, ensure_ascii=False, sort_keys=True) + "\n")
    write_manifest(manifest_path, {
        "stage": "normalize", "signature": signature, "model": cfg.provider.model,
        "outputs": {"normalized": _NORMALIZED}, "counts": statuses,
    })
    click.echo(f"normalize: {sum(statuses.values())} claims "
               f"({', '.join(f'{k}={v}' for k, v in sorted(statuses.items()))})")


def cmd_pairs(cfg: RunConfig) -> None:
    dataset, qrels, split = _load_workspace(cfg)
    perturbations_path = _require_artifact(cfg, _PERTURBATIONS, "perturb")
    signature = signature_of({
        "stage": "pairs",
        "config": {"retrieve": raw_section(cfg, "retrieve"),
                   "perturb": raw_section(cfg, "perturb")},
        "inputs": {"perturbations": file_sha256(perturbations_path),
                   **_dataset_hashes(cfg)},
    })
    manifest_path = _out(cfg, "pairs/pairs.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, [_PAIRS_TSV, _TRIPLES_TSV]):
        click.echo("pairs: up to date")
        return
    psets = read_perturbations(perturbations_path)
    originals = {claim.id: claim.text for claim in dataset.claims.values()}
    corpus = build_parallel_pairs(psets, originals)
    index = build_bm25(dataset.fact_checks, k1=cfg.retrieve.k1, b=cfg.retrieve.b)
    claims = _judged(_split_claims(cfg, dataset, split), qrels)
    triples = build_training_triples(claims, qrels, index)
    _prepare_dir(cfg, _PAIRS_TSV)
    export_training_data(corpus, _out(cfg, _PAIRS_TSV))
    export_training_data(triples, _out(cfg, _TRIPLES_TSV))
    write_manifest(manifest_path, {
        "stage": "pairs", "signature": signature,
        "outputs": {"pairs": _PAIRS_TSV, "triples": _TRIPLES_TSV},
        "counts": {"pairs": len(corpus), "triples": len(triples)},
    })
    click.echo(f"pairs: {len(corpus)} parallel pairs, {len(triples)} training triples")


def cmd_report(cfg: RunConfig) -> None:
    report_path = _require_artifact(cfg, _REPORT_CSV, "eval")
    signature = signature_of({
        "stage": "report",
        "inputs": {"report": file_sha256(report_path)},
    })
    manifest_path = _out(cfg, "eval/report.manifest.json")
    if stage_is_current(manifest_path, signature, cfg.out, [_REPORT_MD]):
        click.echo("report: up to date")
        return
    report = read_report_csv(report_path)
    with open(_out(cfg, _REPORT_MD), "w", encoding="utf-8", newline="\n") as handle:
        handle.write(render_report(report, "markdown"))
    write_manifest(manifest_path, {
        "stage": "report", "signature": signature,
        "outputs": {"markdown": _REPORT_MD},
    })
    click.echo(f"report: wrote {_REPORT_MD}")


_register("ingest", cmd_ingest, "Validate the dataset and write a normalized copy.")
_register("perturb", cmd_perturb, "Generate and verify perturbed claims for every family.")
_register("index", cmd_index, "Build the configured first-stage index.")
_register("retrieve", cmd_retrieve, "Produce first-stage runs for original and perturbed claims.")
_register("rerank", cmd_rerank, "Rerank the top-j candidates of every first-stage run.")
_register("eval", cmd_eval, "Compute MAP gap metrics on aligned subsets.")
_register("normalize", cmd_normalize, "Normalize perturbed claims with the chat provider.")
_register("pairs", cmd_pairs, "Export distillation pairs and contrastive training triples.")
_register("report", cmd_report, "Render the gap report as markdown tables.")


if __name__ == "__main__":
    main()
