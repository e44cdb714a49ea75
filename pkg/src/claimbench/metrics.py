"""Rank-truncated MAP and perturbation gap metrics on aligned claim subsets.

AP@k divides the truncated precision sum by min(|relevant|, k), so a claim
whose judgments cannot all fit in the window is not penalized for the
overflow. All gaps are expressed in percentage points: MAP of the
comparison side minus MAP of the baseline side, times 100. Negative gaps
mean the comparison side degraded.
"""

import csv
import io
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .corpus import DataError, RelevanceJudgments
from .retrieve import RankedRun

STAGE_FIRST = "first_stage"
STAGE_RECOVERY = "rerank_recovery"
STAGE_OVERALL = "overall"

REPORT_COLUMNS = ("variant", "stage", "k", "subset_size",
                  "map_unperturbed", "map_perturbed", "delta_pp")

_MARKDOWN_BLOCKS = (
    (STAGE_FIRST, "First-stage retrieval gap", "MAP unperturbed", "MAP perturbed"),
    (STAGE_RECOVERY, "Reranking recovery", "MAP before rerank", "MAP after rerank"),
    (STAGE_OVERALL, "Overall gap after reranking", "MAP unperturbed", "MAP perturbed"),
)


def average_precision_at_k(ranking: Sequence[str], relevant: Set[str], k: int) -> float:
    """AP truncated at rank k with denominator min(|relevant|, k)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    hits = 0
    precision_sum = 0.0
    for position, fc_id in enumerate(ranking[:k], start=1):
        if fc_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / min(len(relevant), k)


def map_at_k(run: RankedRun, qrels: RelevanceJudgments, k: int,
             subset: Optional[Set[str]] = None) -> float:
    """Mean AP@k over claims present in the run that carry judgments."""
    claim_ids = [claim_id for claim_id in run.rankings
                 if qrels.get(claim_id) and (subset is None or claim_id in subset)]
    if not claim_ids:
        raise DataError("no claims with relevance judgments to evaluate")
    total = 0.0
    for claim_id in claim_ids:
        ranking = [fc_id for fc_id, _ in run.rankings[claim_id]]
        total += average_precision_at_k(ranking, qrels[claim_id], k)
    return total / len(claim_ids)


def aligned_subset(run: RankedRun, perturbed) -> Set[str]:
    """Claims evaluated in the run that also have a valid perturbation.

    `perturbed` is either a perturbation set (entries with claim_id/valid)
    or a plain iterable of claim ids.
    """
    if hasattr(perturbed, "entries"):
        ids = {entry.claim_id for entry in perturbed.entries if entry.valid}
    else:
        ids = set(perturbed)
    return ids & set(run.rankings.keys())


def _gap(baseline: RankedRun, comparison: RankedRun, qrels: RelevanceJudgments,
         subset: Optional[Set[str]], k: int) -> Tuple[float, float, float, int]:
    """(baseline MAP, comparison MAP, delta in pp, evaluated claim count).

    Claims absent from either run are excluded from both sides so the two
    means always cover the same claims.
    """
    eligible = {claim_id for claim_id in baseline.rankings
                if claim_id in comparison.rankings and qrels.get(claim_id)}
    if subset is not None:
        eligible &= set(subset)
    if not eligible:
        raise DataError(
            "aligned subset is empty: "
            f"baseline run has {len(baseline.rankings)} claims, "
            f"comparison run has {len(comparison.rankings)}, "
            f"requested subset has {0 if subset is None else len(subset)}; "
            "no overlap with judged claims"
        )
    map_baseline = map_at_k(baseline, qrels, k, subset=eligible)
    map_comparison = map_at_k(comparison, qrels, k, subset=eligible)
    delta = 100.0 * (map_comparison - map_baseline)
    return map_baseline, map_comparison, delta, len(eligible)


def retrieval_gap(unperturbed_run: RankedRun, perturbed_run: RankedRun,
                  qrels: RelevanceJudgments, subset: Optional[Set[str]], k: int) -> float:
    """First-stage gap: perturbed MAP minus unperturbed MAP, in pp."""
    return _gap(unperturbed_run, perturbed_run, qrels, subset, k)[2]


def recovery_gap(perturbed_first: RankedRun, perturbed_reranked: RankedRun,
                 qrels: RelevanceJudgments, subset: Optional[Set[str]], k: int) -> float:
    """How much reranking recovers on perturbed queries, in pp."""
    return _gap(perturbed_first, perturbed_reranked, qrels, subset, k)[2]


def overall_gap(unperturbed_reranked: RankedRun, perturbed_reranked: RankedRun,
                qrels: RelevanceJudgments, subset: Optional[Set[str]], k: int) -> float:
    """End-to-end gap after reranking both sides, in pp."""
    return _gap(unperturbed_reranked, perturbed_reranked, qrels, subset, k)[2]


@dataclass(frozen=True)
class GapRow:
    variant: str
    stage: str
    k: int
    subset_size: int
    map_unperturbed: float
    map_perturbed: float
    delta_pp: float


@dataclass
class GapReport:
    rows: List[GapRow]


@dataclass(frozen=True)
class VariantRuns:
    """Runs and valid-claim ids for one perturbation variant."""

    first: RankedRun
    reranked: RankedRun
    valid_claims: Set[str]


def compute_gap_report(unperturbed_first: RankedRun, unperturbed_reranked: RankedRun,
                       variants: Mapping[str, VariantRuns], qrels: RelevanceJudgments,
                       ks: Iterable[int]) -> GapReport:
    """Assemble all three gap blocks for every variant and every k.

    The same aligned subset (valid perturbations intersected with the
    unperturbed run's evaluated claims) feeds all three blocks of a variant.
    """
    rows: List[GapRow] = []
    for label in sorted(variants):
        data = variants[label]
        subset = aligned_subset(unperturbed_first, data.valid_claims)
        for k in ks:
            blocks = (
                (STAGE_FIRST, unperturbed_first, data.first),
                (STAGE_RECOVERY, data.first, data.reranked),
                (STAGE_OVERALL, unperturbed_reranked, data.reranked),
            )
            for stage, baseline, comparison in blocks:
                map_base, map_comp, delta, size = _gap(baseline, comparison, qrels, subset, k)
                rows.append(GapRow(
                    variant=label, stage=stage, k=k, subset_size=size,
                    map_unperturbed=map_base, map_perturbed=map_comp, delta_pp=delta,
                ))
    return GapReport(rows=rows)


def render_report(report: GapReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "markdown":
        return _render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}; expected csv or markdown")


def _render_csv(report: GapReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.rows:
        writer.writerow([
            row.variant, row.stage, row.k, row.subset_size,
            f"{row.map_unperturbed:.6f}", f"{row.map_perturbed:.6f}", f"{row.delta_pp:.4f}",
        ])
    return buffer.getvalue()


def _render_markdown(report: GapReport) -> str:
    lines: List[str] = []
    for stage, title, base_label, comp_label in _MARKDOWN_BLOCKS:
        rows = [row for row in report.rows if row.stage == stage]
        if not rows:
            continue
        lines.append(f"## {title}")
        lines.append("")
        lines.append(f"| variant | k | subset | {base_label} | {comp_label} | delta (pp) |")
        lines.append("| --- | ---: | ---: | ---: | ---: | ---: |")
        for row in sorted(rows, key=lambda r: (r.variant, r.k)):
            lines.append(
                f"| {row.variant} | {row.k} | {row.subset_size} "
                f"| {row.map_unperturbed:.4f} | {row.map_perturbed:.4f} "
                f"| {row.delta_pp:+.2f} |"
            )
        lines.append("")
    return "\n".join(lines)


def read_report_csv(path: str) -> GapReport:
    rows: List[GapRow] = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != REPORT_COLUMNS:
            raise DataError(f"{path}: unexpected report columns {reader.fieldnames}")
        for record in reader:
            try:
                rows.append(GapRow(
                    variant=record["variant"], stage=record["stage"],
                    k=int(record["k"]), subset_size=int(record["subset_size"]),
                    map_unperturbed=float(record["map_unperturbed"]),
                    map_perturbed=float(record["map_perturbed"]),
                    delta_pp=float(record["delta_pp"]),
                ))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: malformed report row {record!r}: {exc}") from exc
    return GapReport(rows=rows)
