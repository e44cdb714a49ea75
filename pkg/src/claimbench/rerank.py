"""Second-stage reranking of first-stage candidate lists.

The reranker rescores the top-j candidates of each claim against the full
fact-check text and re-sorts them by (reranker score desc, first-stage rank
asc); everything past j keeps its first-stage order. Output runs carry
ordinal scores (descending n-i floats) because raw reranker scores mixed
with an untouched first-stage tail would not be monotonic; ordering is the
only signal downstream metrics consume.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

from .corpus import DataError
from .provider import ProviderError
from .retrieve import RankedRun

logger = logging.getLogger(__name__)


@dataclass
class RerankResult:
    run: RankedRun
    failed_claims: List[str]


def rerank_run(run: RankedRun, queries: Mapping[str, str],
               fact_check_texts: Mapping[str, str],
               scorer: Callable[[str, Sequence[str]], Sequence[float]],
               j: int) -> RerankResult:
    """Rerank every claim's head; a provider failure leaves that claim untouched."""
    if j < 1:
        raise ValueError("j must be at least 1")
    rankings: Dict[str, List[Tuple[str, float]]] = {}
    failed: List[str] = []
    for claim_id, entries in run.rankings.items():
        if claim_id not in queries:
            raise DataError(f"no query text available for claim {claim_id!r}")
        head = entries[:j]
        tail = entries[j:]
        try:
            texts = []
            for fc_id, _ in head:
                if fc_id not in fact_check_texts:
                    raise DataError(f"no fact-check text available for {fc_id!r}")
                texts.append(fact_check_texts[fc_id])
            scores = list(scorer(queries[claim_id], texts))
            if len(scores) != len(head):
                raise ProviderError(
                    f"reranker returned {len(scores)} scores for {len(head)} candidates")
            order = sorted(range(len(head)), key=lambda i: (-float(scores[i]), i))
            reordered = [head[i] for i in order] + tail
        except ProviderError as exc:
            logger.warning("rerank failed for claim %s; keeping first-stage order: %s",
                           claim_id, exc)
            failed.append(claim_id)
            reordered = list(entries)
        total = len(reordered)
        rankings[claim_id] = [(fc_id, float(total - position))
                              for position, (fc_id, _) in enumerate(reordered)]
    model = getattr(scorer, "model", run.model)
    reranked = RankedRun(stage="reranked", model=model, depth=run.depth, rankings=rankings)
    return RerankResult(run=reranked, failed_claims=failed)


def sweep_j(run: RankedRun, queries: Mapping[str, str],
            fact_check_texts: Mapping[str, str],
            scorer: Callable[[str, Sequence[str]], Sequence[float]],
            j_values: Iterable[int],
            metric_fn: Callable[[RankedRun], float]) -> Dict[int, float]:
    """Evaluate a metric over reranked runs for several rerank depths."""
    table: Dict[int, float] = {}
    for j in j_values:
        result = rerank_run(run, queries, fact_check_texts, scorer, j)
        table[j] = metric_fn(result.run)
    return table
