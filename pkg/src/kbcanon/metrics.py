"""Clustering-vs-gold evaluation: macro, micro, and pairwise P/R/F1.

All scorers operate on plain partitions: predicted clusters as collections
of element ids and gold as a map from element id to gold label. Elements
without gold labels are dropped before scoring, and the gold partition is
restricted to the elements that remain, so both partitions always cover the
same element set. Scores whose denominator is zero (e.g. pairwise precision
of an all-singleton clustering) are reported as explicit None, never as a
silent 0 or 1.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from math import comb
from typing import Collection, Iterable, Mapping, Sequence

from .errors import InvariantViolation, MetricsUndefinedError


@dataclass(frozen=True)
class MetricsReport:
    macro_p: float | None
    macro_r: float | None
    macro_f1: float | None
    micro_p: float | None
    micro_r: float | None
    micro_f1: float | None
    pair_p: float | None
    pair_r: float | None
    pair_f1: float | None
    n_clusters: int
    n_gold: int
    n_elements: int

    def as_dict(self) -> dict:
        return asdict(self)

    def mean_f1(self) -> float:
        """Unweighted mean of the three F1 scores; undefined scores count
        as 0 so that degenerate clusterings rank below defined ones."""
        return sum(x if x is not None else 0.0
                   for x in (self.macro_f1, self.micro_f1, self.pair_f1)) / 3.0


def harmonic_mean(p: float | None, r: float | None) -> float | None:
    if p is None or r is None:
        return None
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def restrict_to_gold(
    clusters: Iterable[Collection[int]], gold: Mapping[int, str]
) -> list[frozenset[int]]:
    """Drop members without gold labels; drop clusters emptied by that."""
    out = []
    for c in clusters:
        kept = frozenset(x for x in c if x in gold)
        if kept:
            out.append(kept)
    return out


def gold_partition(
    gold: Mapping[int, str], elements: Collection[int]
) -> list[frozenset[int]]:
    """Gold clusters over the given elements, grouped by label."""
    by_label = defaultdict(set)
    for x in elements:
        by_label[gold[x]].add(x)
    return [frozenset(s) for _, s in sorted(by_label.items())]


def _element_index(partition: Sequence[Collection[int]], name: str) -> dict[int, int]:
    index: dict[int, int] = {}
    for i, part in enumerate(partition):
        for x in part:
            if x in index:
                raise InvariantViolation(f"{name} is not a partition: {x} repeats")
            index[x] = i
    return index


def _check_same_elements(C, E) -> tuple[dict[int, int], dict[int, int]]:
    c_index = _element_index(C, "predicted clustering")
    e_index = _element_index(E, "gold clustering")
    if set(c_index) != set(e_index):
        raise InvariantViolation(
            "predicted and gold clusterings cover different element sets"
        )
    return c_index, e_index


def macro_scores(
    C: Sequence[Collection[int]], E: Sequence[Collection[int]]
) -> tuple[float, float]:
    """P = fraction of predicted clusters contained in some gold cluster;
    R = the same with roles swapped."""
    if not C or not E:
        raise MetricsUndefinedError("macro scores need non-empty clusterings")
    c_index, e_index = _check_same_elements(C, E)
    pure_c = sum(1 for c in C if len({e_index[x] for x in c}) == 1)
    pure_e = sum(1 for e in E if len({c_index[x] for x in e}) == 1)
    return pure_c / len(C), pure_e / len(E)


def micro_scores(
    C: Sequence[Collection[int]], E: Sequence[Collection[int]]
) -> tuple[float, float]:
    """P = (1/N) * sum over predicted clusters of the plurality gold-label
    count (purity); R = the same with roles swapped."""
    if not C or not E:
        raise MetricsUndefinedError("micro scores need non-empty clusterings")
    c_index, e_index = _check_same_elements(C, E)
    n = len(c_index)
    p = sum(Counter(e_index[x] for x in c).most_common(1)[0][1] for c in C) / n
    r = sum(Counter(c_index[x] for x in e).most_common(1)[0][1] for e in E) / n
    return p, r


def pairwise_scores(
    C: Sequence[Collection[int]], E: Sequence[Collection[int]]
) -> tuple[float | None, float | None]:
    """Hits are co-clustered pairs sharing a gold cluster. P = hits over
    all predicted pairs, R = hits over all gold pairs; a zero denominator
    yields None."""
    if not C or not E:
        raise MetricsUndefinedError("pairwise scores need non-empty clusterings")
    _, e_index = _check_same_elements(C, E)
    hits = 0
    for c in C:
        for count in Counter(e_index[x] for x in c).values():
            hits += comb(count, 2)
    c_pairs = sum(comb(len(c), 2) for c in C)
    e_pairs = sum(comb(len(e), 2) for e in E)
    p = hits / c_pairs if c_pairs else None
    r = hits / e_pairs if e_pairs else None
    return p, r


def evaluate(
    clusters: Iterable[Collection[int]], gold: Mapping[int, str]
) -> MetricsReport:
    """Restrict to gold-labeled elements, build the gold partition, and
    assemble all nine scores plus counts."""
    C = restrict_to_gold(clusters, gold)
    elements = {x for c in C for x in c}
    if not elements:
        raise MetricsUndefinedError(
            "no gold-labeled elements present in the clustering"
        )
    E = gold_partition(gold, elements)
    macro_p, macro_r = macro_scores(C, E)
    micro_p, micro_r = micro_scores(C, E)
    pair_p, pair_r = pairwise_scores(C, E)
    return MetricsReport(
        macro_p=macro_p, macro_r=macro_r, macro_f1=harmonic_mean(macro_p, macro_r),
        micro_p=micro_p, micro_r=micro_r, micro_f1=harmonic_mean(micro_p, micro_r),
        pair_p=pair_p, pair_r=pair_r, pair_f1=harmonic_mean(pair_p, pair_r),
        n_clusters=len(C), n_gold=len(E), n_elements=len(elements),
    )


def format_report(report: MetricsReport) -> str:
    """Plain table for standard output."""

    def cell(x: float | None) -> str:
        return "   undef" if x is None else f"{x:8.4f}"

    lines = [
        "metric     precision   recall       F1",
        f"macro     {cell(report.macro_p)}  {cell(report.macro_r)}  {cell(report.macro_f1)}",
        f"micro     {cell(report.micro_p)}  {cell(report.micro_r)}  {cell(report.micro_f1)}",
        f"pairwise  {cell(report.pair_p)}  {cell(report.pair_r)}  {cell(report.pair_f1)}",
        f"clusters={report.n_clusters} gold={report.n_gold} elements={report.n_elements}",
    ]
    return "\n".join(lines)
