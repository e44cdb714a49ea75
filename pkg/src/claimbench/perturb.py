"""Constrained claim perturbation: generate candidates, verify, select budgets.

Each perturbation family turns an original claim into one perturbed claim
per variant. LLM-backed families generate several candidates at high
temperature, a verifier at temperature 0 labels each candidate valid or
not, and the budgeted families (typos, llm_rewrite) keep the valid
candidates with the smallest and largest character edit distance. The
remaining LLM families use one prompt per variant and pass through the
earliest valid candidate. Casing is rule-based and always valid.

Verification is conservative by design: when the verifier response cannot
be parsed after one repair attempt, every candidate is labelled invalid.
"""

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .corpus import Claim, DataError, Dataset, FactCheck, RelevanceJudgments
from .provider import ChatRequest, ProviderClient
from .textops import (TokenSequence, build_case_lexicon, levenshtein,
                      normalized_levenshtein, rouge_f1, tokenize_words, truecase, uppercase)

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
GENERATION_TEMPERATURE = 0.9
VERIFICATION_TEMPERATURE = 0.0

GENERATION_REPAIR = (
    "Your previous reply could not be parsed. Respond again using exactly the format "
    "'Rewritten Tweet 1: ...' with one rewritten tweet per line, and nothing else."
)
VERIFICATION_REPAIR = (
    "Your previous reply could not be parsed. Respond again with exactly one JSON object "
    'of the form {"labels": [...]} holding one 0 or 1 per rewritten tweet, and nothing else.'
)


class Family(str, Enum):
    CASING = "casing"
    TYPOS = "typos"
    NEGATION = "negation"
    ENTITY_REPLACEMENT = "entity_replacement"
    LLM_REWRITE = "llm_rewrite"
    DIALECT = "dialect"


FAMILY_VARIANTS: Dict[Family, Tuple[str, ...]] = {
    Family.CASING: ("truecase", "upper"),
    Family.TYPOS: ("least", "most"),
    Family.NEGATION: ("shallow", "double"),
    Family.ENTITY_REPLACEMENT: ("at_least_one", "all"),
    Family.LLM_REWRITE: ("least", "most"),
    Family.DIALECT: ("aae", "jamaican", "pidgin", "singlish"),
}

# Families whose variants are picked by edit-distance budget.
DISTANCE_FAMILIES = (Family.TYPOS, Family.LLM_REWRITE)

# Prompt template per (family, variant); None covers both budget variants.
_GENERATION_TEMPLATES: Dict[Tuple[Family, Optional[str]], str] = {
    (Family.TYPOS, None): "typos",
    (Family.LLM_REWRITE, None): "llm_rewrite",
    (Family.NEGATION, "shallow"): "negation_shallow",
    (Family.NEGATION, "double"): "negation_double",
    (Family.ENTITY_REPLACEMENT, "at_least_one"): "entity_at_least_one",
    (Family.ENTITY_REPLACEMENT, "all"): "entity_all",
    (Family.DIALECT, "aae"): "dialect_aae",
    (Family.DIALECT, "jamaican"): "dialect_jamaican",
    (Family.DIALECT, "pidgin"): "dialect_pidgin",
    (Family.DIALECT, "singlish"): "dialect_singlish",
}

_REWRITE_LINE = re.compile(
    r"^\s*(?:[-*•]\s*)?"
    r"(?:(?:rewritten\s+tweet|rewrite)\s*#?\d*\s*[:.)\-]\s*|\d+\s*[.):]\s*)"
    r"(.+?)\s*$",
    re.IGNORECASE,
)

_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"))


def variant_label(family: Family, variant: str) -> str:
    return f"{family.value}:{variant}"


@dataclass(frozen=True)
class PerturbedClaim:
    claim_id: str
    family: Family
    variant: Optional[str]
    text: str
    valid: bool
    edit_distance: Optional[int] = None
    normalized_distance: Optional[float] = None


@dataclass(frozen=True)
class Provenance:
    prompt_version: str
    model: str
    seed: Optional[int] = None


@dataclass(frozen=True)
class FailureRecord:
    claim_id: str
    family: Family
    variant: Optional[str]
    reason: str  # generation_failed | all_invalid


@dataclass
class PerturbationSet:
    """All valid perturbed claims for one (family, variant)."""

    family: Family
    variant: str
    entries: List[PerturbedClaim]
    provenance: Provenance

    def __post_init__(self):
        if self.variant not in FAMILY_VARIANTS[self.family]:
            raise ValueError(f"variant {self.variant!r} is not legal for family {self.family.value}")
        seen = set()
        for entry in self.entries:
            if not entry.valid:
                raise ValueError(f"perturbation set contains invalid entry for {entry.claim_id!r}")
            if entry.family != self.family or entry.variant != self.variant:
                raise ValueError(f"entry {entry.claim_id!r} does not belong to this set")
            if entry.claim_id in seen:
                raise ValueError(f"duplicate claim id {entry.claim_id!r} in perturbation set")
            seen.add(entry.claim_id)

    @property
    def label(self) -> str:
        return variant_label(self.family, self.variant)

    def valid_claim_ids(self) -> List[str]:
        return [entry.claim_id for entry in self.entries]


@dataclass
class PerturbationBatch:
    sets: List[PerturbationSet]
    failures: List[FailureRecord]

    def counts(self) -> Dict[str, int]:
        return {pset.label: len(pset.entries) for pset in self.sets}


def load_prompt(name: str, version: str = PROMPT_VERSION) -> str:
    root = resources.files("claimbench")
    return root.joinpath("prompts").joinpath(version).joinpath(f"{name}.txt").read_text("utf-8")


def render_prompt(template: str, **values: str) -> str:
    """Fill {placeholder} slots literally; JSON braces in templates stay intact."""
    rendered = template
    for key, value in values.items():
        rendered = rendered.replace("{" + key + "}", value)
    return rendered


def _strip_quotes(text: str) -> str:
    for opening, closing in _QUOTE_PAIRS:
        if len(text) >= 2 and text.startswith(opening) and text.endswith(closing):
            return text[1:-1].strip()
    return text


def parse_rewrites(response: str, limit: int) -> List[str]:
    """Extract enumerated rewrites, tolerating numbering drift; deduped, capped."""
    candidates: List[str] = []
    for line in response.splitlines():
        match = _REWRITE_LINE.match(line)
        if not match:
            continue
        text = _strip_quotes(match.group(1).strip())
        if text and text not in candidates:
            candidates.append(text)
        if len(candidates) == limit:
            break
    return candidates


def parse_labels(response: str, expected: int) -> Optional[List[int]]:
    """Find a {"labels": [...]} object with one binary label per candidate."""
    for match in re.finditer(r"\{.*?\}", response, flags=re.DOTALL):
        try:
            payload = json.loads(match.group())
        except ValueError:
            continue
        labels = payload.get("labels") if isinstance(payload, dict) else None
        if (isinstance(labels, list) and len(labels) == expected
                and all(isinstance(x, (int, bool)) and int(x) in (0, 1) for x in labels)):
            return [int(x) for x in labels]
    return None


def _template_for(family: Family, variant: Optional[str]) -> str:
    key = (family, None) if family in DISTANCE_FAMILIES else (family, variant)
    if key not in _GENERATION_TEMPLATES:
        raise ValueError(f"no generation prompt for family {family.value}, variant {variant!r}")
    return _GENERATION_TEMPLATES[key]


def generate_candidates(claim_text: str, fact_check_text: str, family: Family,
                        client: ProviderClient, model: str,
                        variant: Optional[str] = None, n: int = 5) -> List[str]:
    """One high-temperature chat call; a parse failure earns one repair attempt."""
    if n < 1:
        raise ValueError("n must be at least 1")
    template = load_prompt(_template_for(family, variant))
    prompt = render_prompt(template, claim=claim_text, fact_check=fact_check_text)
    request = ChatRequest(model=model, messages=(("user", prompt),),
                          temperature=GENERATION_TEMPERATURE)
    response = client.chat(request)
    candidates = parse_rewrites(response.text, limit=n)
    if candidates:
        return candidates
    repair = ChatRequest(
        model=model,
        messages=request.messages + (("assistant", response.text), ("user", GENERATION_REPAIR)),
        temperature=GENERATION_TEMPERATURE,
    )
    response = client.chat(repair)
    return parse_rewrites(response.text, limit=n)


def verify_candidates(claim_text: str, fact_check_text: str, candidates: Sequence[str],
                      client: ProviderClient, model: str) -> List[int]:
    """Label each candidate 0/1 at temperature 0; unparseable twice means all 0."""
    if not candidates:
        return []
    template = load_prompt("verify")
    prompt = render_prompt(template, claim=claim_text, fact_check=fact_check_text,
                           rewrites=json.dumps(list(candidates), ensure_ascii=False))
    request = ChatRequest(model=model, messages=(("user", prompt),),
                          temperature=VERIFICATION_TEMPERATURE)
    response = client.chat(request)
    labels = parse_labels(response.text, expected=len(candidates))
    if labels is not None:
        return labels
    repair = ChatRequest(
        model=model,
        messages=request.messages + (("assistant", response.text), ("user", VERIFICATION_REPAIR)),
        temperature=VERIFICATION_TEMPERATURE,
    )
    response = client.chat(repair)
    labels = parse_labels(response.text, expected=len(candidates))
    if labels is not None:
        return labels
    logger.warning("verifier output unparseable twice; labelling all %d candidates invalid",
                   len(candidates))
    return [0] * len(candidates)


def select_budget(valid_candidates: Sequence[PerturbedClaim],
                  family: Family) -> Dict[str, PerturbedClaim]:
    """Assign variants: distance budgets pick argmin/argmax, others pass through.

    Ties on distance resolve to the earliest candidate in generation order.
    """
    if not valid_candidates:
        return {}
    if family in DISTANCE_FAMILIES:
        for candidate in valid_candidates:
            if candidate.edit_distance is None:
                raise ValueError("budget selection requires edit distances on every candidate")
        least = min(valid_candidates, key=lambda c: c.edit_distance)
        most = max(valid_candidates, key=lambda c: c.edit_distance)
        # max() returns the first maximal element, matching the tie rule.
        return {
            "least": replace(least, variant="least"),
            "most": replace(most, variant="most"),
        }
    selected: Dict[str, PerturbedClaim] = {}
    for candidate in valid_candidates:
        if candidate.variant is None:
            raise ValueError("pass-through selection requires variant-tagged candidates")
        selected.setdefault(candidate.variant, candidate)
    return selected


def perturb_casing(claim: Claim, lexicon: Mapping[str, str]) -> Dict[str, PerturbedClaim]:
    """Rule-based casing variants; always valid, no verifier involved."""
    return {
        "truecase": PerturbedClaim(claim_id=claim.id, family=Family.CASING, variant="truecase",
                                   text=truecase(claim.text, dict(lexicon)), valid=True),
        "upper": PerturbedClaim(claim_id=claim.id, family=Family.CASING, variant="upper",
                                text=uppercase(claim.text), valid=True),
    }


def _char_distance(original: str, perturbed: str) -> Tuple[int, float]:
    a = TokenSequence.characters(original)
    b = TokenSequence.characters(perturbed)
    return levenshtein(a, b), normalized_levenshtein(a, b)


def perturb_claim(claim: Claim, fact_check: FactCheck, family: Family,
                  client: ProviderClient, model: str,
                  lexicon: Optional[Mapping[str, str]] = None,
                  n: int = 5) -> Tuple[Dict[str, PerturbedClaim], List[FailureRecord]]:
    """Produce every variant of one family for one claim; failures never raise."""
    if family is Family.CASING:
        if lexicon is None:
            raise ValueError("casing perturbation requires a case lexicon")
        return perturb_casing(claim, lexicon), []

    if family in DISTANCE_FAMILIES:
        texts = generate_candidates(claim.text, fact_check.text, family, client, model, n=n)
        if not texts:
            return {}, [FailureRecord(claim.id, family, None, "generation_failed")]
        labels = verify_candidates(claim.text, fact_check.text, texts, client, model)
        valid: List[PerturbedClaim] = []
        for text, label in zip(texts, labels):
            if label != 1:
                continue
            distance, normalized = _char_distance(claim.text, text)
            valid.append(PerturbedClaim(claim_id=claim.id, family=family, variant=None,
                                        text=text, valid=True, edit_distance=distance,
                                        normalized_distance=normalized))
        if not valid:
            return {}, [FailureRecord(claim.id, family, None, "all_invalid")]
        return select_budget(valid, family), []

    selected: Dict[str, PerturbedClaim] = {}
    failures: List[FailureRecord] = []
    for variant in FAMILY_VARIANTS[family]:
        texts = generate_candidates(claim.text, fact_check.text, family, client, model,
                                    variant=variant, n=n)
        if not texts:
            failures.append(FailureRecord(claim.id, family, variant, "generation_failed"))
            continue
        labels = verify_candidates(claim.text, fact_check.text, texts, client, model)
        first_valid = next((text for text, label in zip(texts, labels) if label == 1), None)
        if first_valid is None:
            failures.append(FailureRecord(claim.id, family, variant, "all_invalid"))
            continue
        selected[variant] = PerturbedClaim(claim_id=claim.id, family=family, variant=variant,
                                           text=first_valid, valid=True)
    return selected, failures


def perturb_dataset(claims: Sequence[Claim], qrels: RelevanceJudgments, dataset: Dataset,
                    families: Sequence[Family], client: ProviderClient, model: str,
                    seed: Optional[int] = None, n: int = 5) -> PerturbationBatch:
    """Perturb every judged claim for every family; per-claim failures are recorded.

    Claims run concurrently up to the client's parallelism bound, and
    results are assembled in input claim order, so output is deterministic
    under a seeded mock provider.
    """
    families = list(families)
    for family in families:
        if not isinstance(family, Family):
            raise ValueError(f"unknown perturbation family {family!r}")
    lexicon = None
    if Family.CASING in families:
        lexicon = build_case_lexicon(fc.text for fc in dataset.fact_checks.values())
    eligible = [claim for claim in claims if qrels.get(claim.id)]
    skipped = [claim for claim in claims if not qrels.get(claim.id)]
    if skipped:
        logger.info("skipping %d claims without relevance judgments", len(skipped))

    def work(claim: Claim):
        fc_id = min(qrels[claim.id])
        fact_check = dataset.fact_checks[fc_id]
        per_family: Dict[Family, Dict[str, PerturbedClaim]] = {}
        failures: List[FailureRecord] = []
        for family in families:
            selected, fails = perturb_claim(claim, fact_check, family, client, model,
                                            lexicon=lexicon, n=n)
            per_family[family] = selected
            failures.extend(fails)
        return per_family, failures

    if eligible:
        with ThreadPoolExecutor(max_workers=client.parallelism) as pool:
            results = list(pool.map(work, eligible))
    else:
        results = []

    provenance = Provenance(prompt_version=PROMPT_VERSION, model=model, seed=seed)
    sets: List[PerturbationSet] = []
    for family in families:
        for variant in FAMILY_VARIANTS[family]:
            entries = []
            for per_family, _ in results:
                entry = per_family.get(family, {}).get(variant)
                if entry is not None:
                    entries.append(entry)
            sets.append(PerturbationSet(family=family, variant=variant,
                                        entries=entries, provenance=provenance))
    all_failures = [failure for _, failures in results for failure in failures]
    return PerturbationBatch(sets=sets, failures=all_failures)


@dataclass(frozen=True)
class OverlapStatistics:
    """Mean lexical overlap between one variant's perturbations and the originals.

    ROUGE values are percentages; Levenshtein values are normalized to [0, 1]
    and reported at both word and character origin.
    """

    variant: str
    count: int
    rouge1: float
    rouge2: float
    rouge_l: float
    lev_word: float
    lev_char: float


def overlap_statistics(pset: PerturbationSet, originals: Mapping[str, str]) -> OverlapStatistics:
    if not pset.entries:
        raise DataError(f"perturbation set {pset.label} is empty")
    totals = {"r1": 0.0, "r2": 0.0, "rl": 0.0, "lw": 0.0, "lc": 0.0}
    for entry in pset.entries:
        if entry.claim_id not in originals:
            raise DataError(f"no original text for claim {entry.claim_id!r}")
        original = originals[entry.claim_id]
        totals["r1"] += rouge_f1(original, entry.text, "r1")
        totals["r2"] += rouge_f1(original, entry.text, "r2")
        totals["rl"] += rouge_f1(original, entry.text, "rl")
        totals["lw"] += normalized_levenshtein(tokenize_words(original),
                                               tokenize_words(entry.text))
        totals["lc"] += normalized_levenshtein(TokenSequence.characters(original),
                                               TokenSequence.characters(entry.text))
    count = len(pset.entries)
    return OverlapStatistics(
        variant=pset.label,
        count=count,
        rouge1=100.0 * totals["r1"] / count,
        rouge2=100.0 * totals["r2"] / count,
        rouge_l=100.0 * totals["rl"] / count,
        lev_word=totals["lw"] / count,
        lev_char=totals["lc"] / count,
    )


def write_perturbations(batch: PerturbationBatch, path: str) -> None:
    """Write one JSONL row per perturbed claim, grouped by (family, variant)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for pset in batch.sets:
            for entry in pset.entries:
                record = {
                    "claim_id": entry.claim_id,
                    "family": entry.family.value,
                    "variant": entry.variant,
                    "text": entry.text,
                    "valid": entry.valid,
                    "prompt_version": pset.provenance.prompt_version,
                    "model": pset.provenance.model,
                }
                if entry.edit_distance is not None:
                    record["edit_distance"] = entry.edit_distance
                if entry.normalized_distance is not None:
                    record["normalized_distance"] = entry.normalized_distance
                handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_perturbations(path: str) -> List[PerturbationSet]:
    """Group perturbations.jsonl rows back into per-variant sets."""
    grouped: Dict[Tuple[Family, str], List[PerturbedClaim]] = {}
    provenance: Dict[Tuple[Family, str], Provenance] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                family = Family(record["family"])
                entry = PerturbedClaim(
                    claim_id=record["claim_id"], family=family, variant=record["variant"],
                    text=record["text"], valid=bool(record["valid"]),
                    edit_distance=record.get("edit_distance"),
                    normalized_distance=record.get("normalized_distance"),
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed perturbation row: {exc}") from exc
            key = (family, entry.variant)
            grouped.setdefault(key, []).append(entry)
            provenance.setdefault(key, Provenance(
                prompt_version=record.get("prompt_version", PROMPT_VERSION),
                model=record.get("model", ""),
            ))
    return [PerturbationSet(family=family, variant=variant, entries=entries,
                            provenance=provenance[(family, variant)])
            for (family, variant), entries in grouped.items()]
