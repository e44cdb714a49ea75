"""First-stage retrieval: Okapi BM25 over whole documents, cosine over passages.

BM25 scores whole fact-check texts. The dense path embeds fact-checks at
paragraph (or document) granularity, L2-normalizes every vector at ingest,
and aggregates passage scores per fact-check by maximum. All rankings are
ordered by (score desc, fact-check id asc).

Vector index file layout (all integers little-endian):

    magic   4 bytes  b"CBVI"
    u16     version (1)
    u8      granularity (0 = document, 1 = paragraph)
    u8      reserved (0)
    u32     dimension
    u32     passage count
    u16     model tag length, then UTF-8 model tag
    per passage:
        u16  fact-check id length, then UTF-8 id
        u32  paragraph ordinal
        f32 * dimension  (little-endian)
"""

import json
import logging
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import DataError, FactCheck
from .textops import tokenize_words

logger = logging.getLogger(__name__)

_MAGIC = b"CBVI"
_VERSION = 1
_GRANULARITIES = ("document", "paragraph")


def _fact_check_list(fact_checks) -> List[FactCheck]:
    if isinstance(fact_checks, Mapping):
        items = list(fact_checks.values())
    else:
        items = list(fact_checks)
    if not items:
        raise DataError("cannot build an index over an empty fact-check corpus")
    seen = set()
    for fc in items:
        if fc.id in seen:
            raise DataError(f"duplicate fact-check id {fc.id!r}")
        seen.add(fc.id)
    return items


@dataclass
class Bm25Index:
    """Okapi BM25 statistics over whole fact-check documents."""

    k1: float
    b: float
    doc_ids: Tuple[str, ...]
    term_frequencies: Tuple[Counter, ...]
    doc_lengths: Tuple[int, ...]
    avgdl: float
    doc_freq: Counter

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def build_bm25(fact_checks, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    docs = _fact_check_list(fact_checks)
    term_frequencies = []
    doc_lengths = []
    doc_freq: Counter = Counter()
    for fc in docs:
        tokens = tokenize_words(fc.text).tokens
        counts = Counter(tokens)
        term_frequencies.append(counts)
        doc_lengths.append(len(tokens))
        doc_freq.update(counts.keys())
    avgdl = sum(doc_lengths) / len(doc_lengths)
    return Bm25Index(
        k1=k1,
        b=b,
        doc_ids=tuple(fc.id for fc in docs),
        term_frequencies=tuple(term_frequencies),
        doc_lengths=tuple(doc_lengths),
        avgdl=avgdl,
        doc_freq=doc_freq,
    )


def bm25_scores(index: Bm25Index, claim_text: str) -> Dict[str, float]:
    """Score every document for a query; repeated query tokens accumulate."""
    query_tokens = tokenize_words(claim_text).tokens
    scores = {doc_id: 0.0 for doc_id in index.doc_ids}
    if index.avgdl == 0:
        return scores
    for term in query_tokens:
        if term not in index.doc_freq:
            continue
        idf = index.idf(term)
        for doc_id, counts, length in zip(index.doc_ids, index.term_frequencies,
                                          index.doc_lengths):
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            denominator = tf + index.k1 * (1.0 - index.b + index.b * length / index.avgdl)
            scores[doc_id] += idf * tf * (index.k1 + 1.0) / denominator
    return scores


def _top_j(scores: Dict[str, float], j: int) -> List[Tuple[str, float]]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:j]


def bm25_search(index: Bm25Index, claim_text: str, j: int) -> List[Tuple[str, float]]:
    if j < 1:
        raise ValueError("j must be at least 1")
    return _top_j(bm25_scores(index, claim_text), j)


def save_bm25(index: Bm25Index, path: str) -> None:
    """Persist BM25 statistics as deterministic JSON."""
    payload = {
        "kind": "bm25",
        "k1": index.k1,
        "b": index.b,
        "doc_ids": list(index.doc_ids),
        "doc_lengths": list(index.doc_lengths),
        "avgdl": index.avgdl,
        "doc_freq": dict(index.doc_freq),
        "term_frequencies": [dict(counts) for counts in index.term_frequencies],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, ensure_ascii=False)
        handle.write("\n")


def load_bm25(path: str) -> Bm25Index:
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except ValueError as exc:
            raise DataError(f"{path}: malformed BM25 index: {exc}") from exc
    if payload.get("kind") != "bm25":
        raise DataError(f"{path}: not a BM25 index file")
    return Bm25Index(
        k1=float(payload["k1"]),
        b=float(payload["b"]),
        doc_ids=tuple(payload["doc_ids"]),
        term_frequencies=tuple(Counter(counts) for counts in payload["term_frequencies"]),
        doc_lengths=tuple(int(x) for x in payload["doc_lengths"]),
        avgdl=float(payload["avgdl"]),
        doc_freq=Counter(payload["doc_freq"]),
    )


@dataclass
class VectorIndex:
    """Flat cosine index over L2-normalized passage vectors."""

    dimension: int
    model: str
    granularity: str
    fact_check_ids: Tuple[str, ...]
    ordinals: Tuple[int, ...]
    vectors: np.ndarray  # (n_passages, dimension), rows unit-norm or zero


def _normalize_rows(vectors: np.ndarray, context: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    zero_rows = np.nonzero(norms.ravel() == 0.0)[0]
    if zero_rows.size:
        logger.warning("%s: %d zero vectors left unnormalized", context, zero_rows.size)
    safe = np.where(norms == 0.0, 1.0, norms)
    return vectors / safe


def build_vector_index(fact_checks, embedder, granularity: str = "paragraph",
                       model: Optional[str] = None, batch_size: int = 64) -> VectorIndex:
    if granularity not in _GRANULARITIES:
        raise DataError(f"unknown granularity {granularity!r}; expected one of {_GRANULARITIES}")
    docs = _fact_check_list(fact_checks)
    fc_ids: List[str] = []
    ordinals: List[int] = []
    texts: List[str] = []
    for fc in docs:
        passages = fc.paragraphs if granularity == "paragraph" else (fc.text,)
        for ordinal, passage in enumerate(passages):
            fc_ids.append(fc.id)
            ordinals.append(ordinal)
            texts.append(passage)
    rows: List[List[float]] = []
    for start in range(0, len(texts), batch_size):
        rows.extend(embedder(texts[start:start + batch_size]))
    try:
        vectors = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise DataError("embedder returned vectors of inconsistent dimension") from exc
    if vectors.ndim != 2:
        raise DataError("embedder returned vectors of inconsistent dimension")
    vectors = _normalize_rows(vectors, "build_vector_index")
    return VectorIndex(
        dimension=vectors.shape[1],
        model=model if model is not None else getattr(embedder, "model", "embedding"),
        granularity=granularity,
        fact_check_ids=tuple(fc_ids),
        ordinals=tuple(ordinals),
        vectors=vectors,
    )


def _aggregate_max(index: VectorIndex, similarities: np.ndarray) -> Dict[str, float]:
    scores: Dict[str, float] = {}
    for fc_id, value in zip(index.fact_check_ids, similarities):
        value = float(value)
        if fc_id not in scores or value > scores[fc_id]:
            scores[fc_id] = value
    return scores


def _dense_scores(index: VectorIndex, query_vector: np.ndarray) -> Dict[str, float]:
    norm = float(np.linalg.norm(query_vector))
    if norm == 0.0:
        logger.warning("dense query embedded to a zero vector; all scores are 0")
        return {fc_id: 0.0 for fc_id in index.fact_check_ids}
    similarities = index.vectors @ (query_vector / norm)
    return _aggregate_max(index, similarities)


def dense_search(index: VectorIndex, claim_text: str, embedder, j: int) -> List[Tuple[str, float]]:
    if j < 1:
        raise ValueError("j must be at least 1")
    query_vector = np.asarray(embedder([claim_text])[0], dtype=np.float64)
    if query_vector.shape != (index.dimension,):
        raise DataError(
            f"query embedding dimension {query_vector.shape[-1]} "
            f"does not match index dimension {index.dimension}"
        )
    return _top_j(_dense_scores(index, query_vector), j)


@dataclass
class RankedRun:
    """Per-claim rankings produced by one retrieval stage."""

    stage: str
    model: str
    depth: int
    rankings: Dict[str, List[Tuple[str, float]]]

    def validate(self) -> None:
        for claim_id, entries in self.rankings.items():
            ids = [fc_id for fc_id, _ in entries]
            if len(set(ids)) != len(ids):
                raise DataError(f"run has duplicate fact-check ids for claim {claim_id!r}")
            for (id_a, score_a), (id_b, score_b) in zip(entries, entries[1:]):
                if score_b > score_a or (score_b == score_a and id_b <= id_a):
                    raise DataError(
                        f"run ordering violated for claim {claim_id!r} at {id_a!r} -> {id_b!r}"
                    )

    def claim_ids(self) -> List[str]:
        return list(self.rankings.keys())


def _query_pairs(queries) -> List[Tuple[str, str]]:
    if isinstance(queries, Mapping):
        pairs = list(queries.items())
    else:
        pairs = []
        for item in queries:
            if hasattr(item, "id") and hasattr(item, "text"):
                pairs.append((item.id, item.text))
            else:
                claim_id, text = item
                pairs.append((claim_id, text))
    seen = set()
    for claim_id, _ in pairs:
        if claim_id in seen:
            raise DataError(f"duplicate claim id {claim_id!r} in query set")
        seen.add(claim_id)
    return pairs


def first_stage_run(queries, index: Union[Bm25Index, VectorIndex], j: int = 50,
                    embedder=None) -> RankedRun:
    """Rank the top-j fact-checks for every query against one index."""
    if j < 1:
        raise ValueError("j must be at least 1")
    pairs = _query_pairs(queries)
    rankings: Dict[str, List[Tuple[str, float]]] = {}
    if isinstance(index, Bm25Index):
        model = "bm25"
        for claim_id, text in pairs:
            rankings[claim_id] = bm25_search(index, text, j)
    else:
        if embedder is None:
            raise ValueError("dense retrieval requires an embedder")
        model = index.model
        vectors = []
        batch = 64
        texts = [text for _, text in pairs]
        for start in range(0, len(texts), batch):
            vectors.extend(embedder(texts[start:start + batch]))
        for (claim_id, _), vector in zip(pairs, vectors):
            query_vector = np.asarray(vector, dtype=np.float64)
            if query_vector.shape != (index.dimension,):
                raise DataError(
                    f"query embedding dimension {query_vector.shape[-1]} "
                    f"does not match index dimension {index.dimension}"
                )
            rankings[claim_id] = _top_j(_dense_scores(index, query_vector), j)
    return RankedRun(stage="first_stage", model=model, depth=j, rankings=rankings)


def _run_tag(run: RankedRun) -> str:
    model = re.sub(r"\s+", "_", run.model)
    return f"{model}.{run.stage}"


def write_run(run: RankedRun, path: str) -> None:
    """Write a run in TREC format: claim Q0 factcheck rank score tag."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        tag = _run_tag(run)
        for claim_id, entries in run.rankings.items():
            for rank, (fc_id, score) in enumerate(entries, start=1):
                handle.write(f"{claim_id} Q0 {fc_id} {rank} {score:.6f} {tag}\n")


def read_run(path: str) -> RankedRun:
    per_claim: Dict[str, List[Tuple[int, str, float]]] = {}
    tag = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
            claim_id, _, fc_id, rank, score, tag = fields
            try:
                entry = (int(rank), fc_id, float(score))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad rank or score: {exc}") from exc
            per_claim.setdefault(claim_id, []).append(entry)
    if tag is None:
        raise DataError(f"{path}: empty run file")
    model, _, stage = tag.rpartition(".")
    rankings = {}
    depth = 0
    for claim_id, entries in per_claim.items():
        entries.sort(key=lambda item: item[0])
        ranks = [rank for rank, _, _ in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise DataError(f"{path}: ranks for claim {claim_id!r} are not contiguous from 1")
        rankings[claim_id] = [(fc_id, score) for _, fc_id, score in entries]
        depth = max(depth, len(entries))
    return RankedRun(stage=stage or tag, model=model or tag, depth=depth, rankings=rankings)


def save_vector_index(index: VectorIndex, path: str) -> None:
    model_bytes = index.model.encode("utf-8")
    granularity_code = _GRANULARITIES.index(index.granularity)
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<HBBII", _VERSION, granularity_code, 0,
                                 index.dimension, len(index.fact_check_ids)))
        handle.write(struct.pack("<H", len(model_bytes)))
        handle.write(model_bytes)
        vectors = np.asarray(index.vectors, dtype="<f4")
        for fc_id, ordinal, vector in zip(index.fact_check_ids, index.ordinals, vectors):
            id_bytes = fc_id.encode("utf-8")
            handle.write(struct.pack("<H", len(id_bytes)))
            handle.write(id_bytes)
            handle.write(struct.pack("<I", int(ordinal)))
            handle.write(vector.tobytes())


def load_vector_index(path: str) -> VectorIndex:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != _MAGIC:
        raise DataError(f"{path}: not a vector index file (bad magic)")
    version, granularity_code, _, dimension, count = struct.unpack_from("<HBBII", data, 4)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported vector index version {version}")
    if granularity_code >= len(_GRANULARITIES):
        raise DataError(f"{path}: unknown granularity code {granularity_code}")
    offset = 4 + struct.calcsize("<HBBII")
    (model_len,) = struct.unpack_from("<H", data, offset)
    offset += 2
    model = data[offset:offset + model_len].decode("utf-8")
    offset += model_len
    fc_ids: List[str] = []
    ordinals: List[int] = []
    vectors = np.empty((count, dimension), dtype=np.float64)
    row_bytes = dimension * 4
    for row in range(count):
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        fc_ids.append(data[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        (ordinal,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ordinals.append(ordinal)
        vectors[row] = np.frombuffer(data, dtype="<f4", count=dimension, offset=offset)
        offset += row_bytes
    if offset != len(data):
        raise DataError(f"{path}: trailing bytes after {count} passages")
    return VectorIndex(
        dimension=dimension,
        model=model,
        granularity=_GRANULARITIES[granularity_code],
        fact_check_ids=tuple(fc_ids),
        ordinals=tuple(ordinals),
        vectors=vectors,
    )
