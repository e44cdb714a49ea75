"""Robustness evaluation harness for claim-matching retrieval pipelines."""

from .corpus import (Claim, DataError, Dataset, DatasetSplit, FactCheck, load_dataset,
                     load_split, split_dataset)
from .metrics import (GapReport, GapRow, VariantRuns, average_precision_at_k,
                      compute_gap_report, map_at_k, recovery_gap, render_report,
                      retrieval_gap, overall_gap)
from .mitigate import (Pair, PairCorpus, TrainingTriple, build_parallel_pairs,
                       build_training_triples, kd_mse_loss, mnr_loss, normalize_claim)
from .perturb import (Family, PerturbationBatch, PerturbationSet, PerturbedClaim,
                      perturb_claim, perturb_dataset)
from .provider import (ChatRequest, Embedder, HttpTransport, MockTransport,
                       ProviderClient, ProviderError, ProviderSettings, RerankScorer,
                       ResponseCache, TransportError, build_provider)
from .rerank import RerankResult, rerank_run, sweep_j
from .retrieve import (Bm25Index, RankedRun, VectorIndex, bm25_search, build_bm25,
                       build_vector_index, dense_search, first_stage_run, read_run,
                       write_run)
from .textops import TokenSequence, levenshtein, normalized_levenshtein, rouge_f1, truecase

__version__ = "0.1.0"

__all__ = [
    "Bm25Index", "ChatRequest", "Claim", "DataError", "Dataset", "DatasetSplit",
    "Embedder", "FactCheck", "Family", "GapReport", "GapRow", "HttpTransport",
    "MockTransport", "Pair", "PairCorpus", "PerturbationBatch", "PerturbationSet",
    "PerturbedClaim", "ProviderClient", "ProviderError", "ProviderSettings",
    "RankedRun", "RerankResult", "RerankScorer", "ResponseCache", "TokenSequence",
    "TrainingTriple", "TransportError", "VariantRuns", "VectorIndex",
    "average_precision_at_k", "bm25_search", "build_bm25", "build_parallel_pairs",
    "build_provider", "build_training_triples", "build_vector_index",
    "compute_gap_report", "dense_search", "first_stage_run", "kd_mse_loss",
    "levenshtein", "load_dataset", "load_split", "map_at_k", "mnr_loss",
    "normalize_claim", "normalized_levenshtein", "overall_gap", "perturb_claim",
    "perturb_dataset", "read_run", "recovery_gap", "rerank_run", "render_report",
    "retrieval_gap", "rouge_f1", "split_dataset", "sweep_j", "truecase", "write_run",
]
