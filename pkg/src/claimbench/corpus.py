"""Dataset loading, validation, splitting, and paragraph decomposition.

Claims and fact-checks arrive as JSONL, relevance judgments as a two-column
TSV. Loading validates referential integrity up front so later stages can
assume every id resolves and every judged claim has at least one judgment.
"""

import json
import random
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

# claim id -> ids of relevant fact-checks (always non-empty sets)
RelevanceJudgments = Dict[str, Set[str]]

_PARAGRAPH_BREAK = re.compile(r"\n\s*\n")


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


def split_paragraphs(text: str) -> List[str]:
    """Split text on blank-line boundaries into non-empty paragraphs.

    Runs of whitespace-only lines collapse into a single boundary and each
    paragraph is stripped, so the operation is idempotent on its own output
    joined back with a blank line.
    """
    return [p for p in (chunk.strip() for chunk in _PARAGRAPH_BREAK.split(text)) if p]


@dataclass(frozen=True)
class Claim:
    id: str
    text: str
    meta: Optional[Mapping[str, str]] = None


@dataclass(frozen=True)
class FactCheck:
    id: str
    text: str
    paragraphs: Tuple[str, ...]

    @classmethod
    def from_text(cls, id: str, text: str) -> "FactCheck":
        paragraphs = tuple(split_paragraphs(text))
        if not paragraphs:
            raise DataError(f"fact-check {id!r} has no non-empty paragraphs")
        return cls(id=id, text=text, paragraphs=paragraphs)


@dataclass(frozen=True)
class Dataset:
    claims: Dict[str, Claim]
    fact_checks: Dict[str, FactCheck]


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[str, ...]
    dev: Tuple[str, ...]
    test: Tuple[str, ...]

    def __post_init__(self):
        seen: Set[str] = set()
        for part in (self.train, self.dev, self.test):
            for claim_id in part:
                if claim_id in seen:
                    raise DataError(f"claim id {claim_id!r} appears in more than one split")
                seen.add(claim_id)


def _read_jsonl(path: str) -> Iterator[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _required_str(record: dict, key: str, path: str, lineno: int) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value.strip():
        raise DataError(f"{path}:{lineno}: field {key!r} must be a non-empty string")
    return value


def load_claims(path: str) -> Dict[str, Claim]:
    claims: Dict[str, Claim] = {}
    for lineno, record in _read_jsonl(path):
        claim_id = _required_str(record, "id", path, lineno)
        text = _required_str(record, "text", path, lineno)
        if claim_id in claims:
            raise DataError(f"{path}:{lineno}: duplicate claim id {claim_id!r}")
        meta = record.get("meta")
        if meta is not None and not isinstance(meta, dict):
            raise DataError(f"{path}:{lineno}: field 'meta' must be an object")
        claims[claim_id] = Claim(id=claim_id, text=text, meta=meta)
    return claims


def load_factchecks(path: str) -> Dict[str, FactCheck]:
    fact_checks: Dict[str, FactCheck] = {}
    for lineno, record in _read_jsonl(path):
        fc_id = _required_str(record, "id", path, lineno)
        text = _required_str(record, "text", path, lineno)
        if fc_id in fact_checks:
            raise DataError(f"{path}:{lineno}: duplicate fact-check id {fc_id!r}")
        fact_checks[fc_id] = FactCheck.from_text(fc_id, text)
    return fact_checks


def load_qrels(path: str, dataset: Dataset) -> RelevanceJudgments:
    """Load claim -> relevant fact-check judgments, rejecting dangling ids."""
    qrels: RelevanceJudgments = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise DataError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                )
            claim_id, fc_id = fields
            if claim_id not in dataset.claims:
                raise DataError(f"{path}:{lineno}: dangling id {claim_id}")
            if fc_id not in dataset.fact_checks:
                raise DataError(f"{path}:{lineno}: dangling id {fc_id}")
            qrels.setdefault(claim_id, set()).add(fc_id)
    return qrels


def load_dataset(
    claims_path: str, factchecks_path: str, qrels_path: str
) -> Tuple[Dataset, RelevanceJudgments]:
    dataset = Dataset(claims=load_claims(claims_path), fact_checks=load_factchecks(factchecks_path))
    qrels = load_qrels(qrels_path, dataset)
    return dataset, qrels


def save_dataset(dataset: Dataset, claims_path: str, factchecks_path: str) -> None:
    """Write claims/fact-checks back to JSONL in dataset order."""
    with open(claims_path, "w", encoding="utf-8") as handle:
        for claim in dataset.claims.values():
            record: dict = {"id": claim.id, "text": claim.text}
            if claim.meta is not None:
                record["meta"] = dict(claim.meta)
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    with open(factchecks_path, "w", encoding="utf-8") as handle:
        for fc in dataset.fact_checks.values():
            handle.write(
                json.dumps({"id": fc.id, "text": fc.text}, ensure_ascii=False, sort_keys=True)
                + "\n"
            )


def save_qrels(qrels: RelevanceJudgments, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for claim_id in sorted(qrels):
            for fc_id in sorted(qrels[claim_id]):
                handle.write(f"{claim_id}\t{fc_id}\n")


def split_dataset(
    claim_ids: Sequence[str],
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Deterministically shuffle and partition claim ids into train/dev/test.

    Dev and test sizes are floored; the remainder goes to train, so e.g.
    537 ids at (0.8, 0.1, 0.1) yield 431/53/53.
    """
    if not claim_ids:
        raise DataError("cannot split an empty list of claim ids")
    if len(set(claim_ids)) != len(claim_ids):
        raise DataError("claim ids to split must be unique")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError(f"ratios must be three non-negative numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1.0, got {sum(ratios)!r}")
    shuffled = list(claim_ids)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_dev = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_dev - n_test
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        dev=tuple(shuffled[n_train:n_train + n_dev]),
        test=tuple(shuffled[n_train + n_dev:]),
    )


def load_split(path: str, dataset: Optional[Dataset] = None) -> DatasetSplit:
    """Load a train/dev/test split from JSON; with a dataset, require an exact partition."""
    with open(path, encoding="utf-8") as handle:
        try:
            record = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise DataError(f"{path}: expected a JSON object with train/dev/test lists")
    parts = {}
    for name in ("train", "dev", "test"):
        value = record.get(name, [])
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            raise DataError(f"{path}: field {name!r} must be a list of claim ids")
        parts[name] = tuple(value)
    split = DatasetSplit(**parts)
    if dataset is not None:
        listed = set(split.train) | set(split.dev) | set(split.test)
        missing = sorted(set(dataset.claims) - listed)
        unknown = sorted(listed - set(dataset.claims))
        if unknown:
            raise DataError(f"{path}: dangling id {unknown[0]}")
        if missing:
            raise DataError(
                f"{path}: split does not cover the dataset; first missing claim id {missing[0]!r}"
            )
    return split


def save_split(split: DatasetSplit, path: str) -> None:
    record = {"train": list(split.train), "dev": list(split.dev), "test": list(split.test)}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
        handle.write("\n")


def evaluable_claims(dataset: Dataset, qrels: RelevanceJudgments) -> List[Claim]:
    """Claims that carry at least one relevance judgment, in dataset order."""
    return [claim for claim in dataset.claims.values() if qrels.get(claim.id)]
