"""Mitigation artifacts: claim normalization, hard negatives, pair corpora, losses.

This module prepares everything a downstream trainer needs without running
any training itself: normalized claims for inference-time cleanup, BM25
hard negatives and (claim, positive, negative) triples for contrastive
fine-tuning, parallel source/target pairs for distillation, and reference
implementations of the two losses with analytic gradients.
"""

import json
import logging
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import Claim, DataError, RelevanceJudgments
from .perturb import PerturbationSet, load_prompt, render_prompt
from .provider import ChatRequest, ProviderClient
from .retrieve import Bm25Index, bm25_search

logger = logging.getLogger(__name__)

UNPERTURBED_TAG = "unperturbed"

_NORMALIZED_LINE = re.compile(r"Normalised Claim:\s*(.*)")
_REFUSAL_MARKERS = ("i'm sorry", "i am sorry", "i cannot", "i can't", "cannot assist",
                    "can't help", "not able to", "unable to")
_QUOTES = "\"'“”‘’"


@dataclass(frozen=True)
class NormalizedClaim:
    text: str
    status: str  # ok | unchanged | refused | unparsed


def normalize_claim(text: str, client: ProviderClient, model: str) -> NormalizedClaim:
    """Rewrite a noisy claim into standard form; failures pass the input through.

    The request always runs at temperature 0. A response without a
    'Normalised Claim:' line is flagged `refused` when it reads like a
    refusal and `unparsed` otherwise; either way the original text is kept.
    """
    prompt = render_prompt(load_prompt("normalize"), claim=text)
    request = ChatRequest(model=model, messages=(("user", prompt),), temperature=0.0)
    response = client.chat(request)
    matches = _NORMALIZED_LINE.findall(response.text)
    if not matches:
        lowered = response.text.lower()
        if any(marker in lowered for marker in _REFUSAL_MARKERS):
            return NormalizedClaim(text=text, status="refused")
        return NormalizedClaim(text=text, status="unparsed")
    normalized = matches[-1].strip().strip(_QUOTES).strip()
    if not normalized or normalized == text.strip():
        return NormalizedClaim(text=text, status="unchanged")
    return NormalizedClaim(text=normalized, status="ok")


def mine_hard_negative(claim: Claim, index: Bm25Index, qrels: RelevanceJudgments) -> str:
    """Top BM25-ranked fact-check that is not relevant to the claim."""
    relevant = qrels.get(claim.id, set())
    ranking = bm25_search(index, claim.text, j=index.n_docs)
    for fc_id, _ in ranking:
        if fc_id not in relevant:
            return fc_id
    raise DataError(
        f"no non-relevant fact-check available for claim {claim.id!r}: corpus exhausted")


@dataclass(frozen=True)
class Pair:
    source: str
    target: str
    source_tag: str
    target_tag: str


@dataclass
class PairCorpus:
    pairs: List[Pair]

    def __len__(self) -> int:
        return len(self.pairs)


def build_parallel_pairs(sets: Iterable[PerturbationSet],
                         originals: Mapping[str, str]) -> PairCorpus:
    """Expand perturbation sets into distillation pairs.

    Per claim with m valid perturbations: m (unperturbed, perturbed) base
    pairs plus all C(m, 2) unordered cross pairs between perturbations.
    Ordering is deterministic (claim id, then tag lexicographic) and pairs
    whose two texts are identical are dropped.
    """
    per_claim: Dict[str, List[Tuple[str, str]]] = {}
    for pset in sets:
        for entry in pset.entries:
            if entry.claim_id not in originals:
                raise DataError(f"no original text for claim {entry.claim_id!r}")
            per_claim.setdefault(entry.claim_id, []).append((pset.label, entry.text))
    pairs: List[Pair] = []
    for claim_id in sorted(per_claim):
        tagged = sorted(per_claim[claim_id], key=lambda item: item[0])
        original = originals[claim_id]
        for tag, text in tagged:
            if text == original:
                continue
            pairs.append(Pair(source=original, target=text,
                              source_tag=UNPERTURBED_TAG, target_tag=tag))
        for (tag_a, text_a), (tag_b, text_b) in combinations(tagged, 2):
            if text_a == text_b:
                continue
            pairs.append(Pair(source=text_a, target=text_b,
                              source_tag=tag_a, target_tag=tag_b))
    return PairCorpus(pairs=pairs)


def mnr_loss(similarity: np.ndarray, temperature: float = 1.0) -> Tuple[float, np.ndarray]:
    """Multiple-negatives ranking loss over an n-by-n similarity matrix.

    Row i treats entry (i, i) as the positive and the rest of the row as
    in-batch negatives. Returns (loss, gradient with respect to the
    similarity matrix). The optional temperature divides the similarities;
    the default 1.0 leaves them untouched. For a constant matrix the loss
    is exactly ln(n).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    matrix = np.asarray(similarity, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise ValueError(f"similarity must be a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    scaled = matrix / temperature
    row_max = scaled.max(axis=1, keepdims=True)
    log_z = row_max.ravel() + np.log(np.exp(scaled - row_max).sum(axis=1))
    loss = float(-(np.diag(scaled) - log_z).mean())
    softmax = np.exp(scaled - log_z[:, None])
    gradient = (softmax - np.eye(n)) / (n * temperature)
    return loss, gradient


def kd_mse_loss(teacher_source: np.ndarray, student_source: np.ndarray,
                student_target: np.ndarray) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """Distillation MSE: pull both student views toward the teacher's source view.

    loss = (1/B) * sum_j( ||M(s_j) - Mhat(s_j)||^2 + ||M(s_j) - Mhat(t_j)||^2 )

    Returns (loss, (gradient wrt student_source, gradient wrt student_target)).
    """
    teacher = np.atleast_2d(np.asarray(teacher_source, dtype=np.float64))
    source = np.atleast_2d(np.asarray(student_source, dtype=np.float64))
    target = np.atleast_2d(np.asarray(student_target, dtype=np.float64))
    if teacher.shape != source.shape or teacher.shape != target.shape:
        raise ValueError(
            f"shape mismatch: teacher {teacher.shape}, student source {source.shape}, "
            f"student target {target.shape}")
    batch = teacher.shape[0]
    diff_source = source - teacher
    diff_target = target - teacher
    loss = float((np.sum(diff_source ** 2) + np.sum(diff_target ** 2)) / batch)
    return loss, (2.0 * diff_source / batch, 2.0 * diff_target / batch)


@dataclass(frozen=True)
class TrainingTriple:
    claim_id: str
    claim_text: str
    positive_id: str
    negative_id: str


def build_training_triples(claims: Sequence[Claim], qrels: RelevanceJudgments,
                           index: Bm25Index) -> List[TrainingTriple]:
    """One triple per (claim, relevant fact-check) with a mined hard negative."""
    triples: List[TrainingTriple] = []
    for claim in claims:
        relevant = qrels.get(claim.id)
        if not relevant:
            continue
        negative = mine_hard_negative(claim, index, qrels)
        for positive in sorted(relevant):
            triples.append(TrainingTriple(claim_id=claim.id, claim_text=claim.text,
                                          positive_id=positive, negative_id=negative))
    return triples


def _flatten(text: str) -> str:
    # TSV rows cannot carry tabs or newlines.
    return re.sub(r"\s+", " ", text).strip()


def export_training_data(data: Union[PairCorpus, Sequence[TrainingTriple]], path: str) -> None:
    """Write pairs.tsv (source, target, source_tag, target_tag) or triples.tsv
    (claim, positive_factcheck_id, hard_negative_id)."""
    if isinstance(data, PairCorpus):
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for pair in data.pairs:
                handle.write(f"{_flatten(pair.source)}\t{_flatten(pair.target)}"
                             f"\t{pair.source_tag}\t{pair.target_tag}\n")
        return
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for triple in data:
            handle.write(f"{_flatten(triple.claim_text)}\t{triple.positive_id}"
                         f"\t{triple.negative_id}\n")
