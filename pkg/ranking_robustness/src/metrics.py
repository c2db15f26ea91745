# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Per-query effectiveness metrics and run-level evaluation.

Relevance is binary (grade > 0) for AP, P@k, R@k and MRR@k. NDCG@k uses the
graded gain ``2**grade - 1`` with a ``log2(rank + 1)`` discount.
"""

import re
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

from src.records import MetricReport, Qrels, RankedList, RunSet

__all__ = [
    'METRIC_NAMES', 'MetricSpec', 'parse_metric', 'average_precision',
    'precision_at_k', 'recall_at_k', 'mrr_at_k', 'ndcg_at_k', 'score_query',
    'evaluate_run'
]

METRIC_NAMES = ('ap', 'p', 'r', 'ndcg', 'mrr')
_NEEDS_CUTOFF = ('p', 'r', 'ndcg', 'mrr')
# Metrics whose value is 0/0 when the query has no relevant document.
_UNDEFINED_WITHOUT_RELEVANT = ('ap', 'r', 'ndcg')
_ALIASES = {'map': 'ap', 'precision': 'p', 'recall': 'r', 'rr': 'mrr'}
_LABEL_PATTERN = re.compile(r'^([a-z]+)(?:@(\d+))?$')


@dataclass(frozen=True)
class MetricSpec:
    name: str
    cutoff: Optional[int] = None

    def __post_init__(self):
        if self.name not in METRIC_NAMES:
            raise ValueError(
                f"metric='{self.name}' must be one of {list(METRIC_NAMES)}.")
        if self.name in _NEEDS_CUTOFF and self.cutoff is None:
            raise ValueError(f'Metric {self.name} requires a cutoff, e.g. '
                             f'{self.name}@10.')
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError(f'Cutoff must be >= 1, got {self.cutoff}.')
        if self.name == 'ap':
            # AP is always evaluated over the full list.
            object.__setattr__(self, 'cutoff', None)

    @property
    def label(self) -> str:
        if self.name == 'ap':
            return 'map'
        return f'{self.name}@{self.cutoff}'


def parse_metric(label: str) -> MetricSpec:
    """Parses ``map``, ``ndcg@20``, ``p@10``, ``r@20``, ``mrr@100``, ..."""
    match = _LABEL_PATTERN.match(label.strip().lower())
    if match is None:
        raise ValueError(f'Not sure how to parse metric {label!r}.')
    name = _ALIASES.get(match.group(1), match.group(1))
    cutoff = int(match.group(2)) if match.group(2) else None
    return MetricSpec(name=name, cutoff=cutoff)


def _first_occurrences(doc_ids: List[str]) -> np.ndarray:
    """Mask of the positions holding a doc id for the first time."""
    mask = np.zeros(len(doc_ids), dtype=bool)
    if doc_ids:
        _, first = np.unique(np.array(doc_ids, dtype=object),
                             return_index=True)
        mask[first] = True
    return mask


def _binary_relevance(ranked: RankedList, qrels: Qrels) -> np.ndarray:
    """Later repeats of a doc id score as non-relevant, as in trec_eval."""
    relevant = qrels.relevant(ranked.query_id)
    doc_ids = ranked.doc_ids
    hits = np.array([doc_id in relevant for doc_id in doc_ids],
                    dtype=np.float64)
    return hits * _first_occurrences(doc_ids)


def _require_relevant(qrels: Qrels, query_id: str) -> int:
    num_relevant = qrels.num_relevant(query_id)
    if num_relevant == 0:
        raise ValueError(f'Query {query_id} has no relevant documents.')
    return num_relevant


def average_precision(ranked: RankedList, qrels: Qrels,
                      query_id: Optional[str] = None) -> float:
    """Mean of Prec@rank over every relevant doc; unretrieved ones add 0."""
    query_id = ranked.query_id if query_id is None else query_id
    num_relevant = _require_relevant(qrels, query_id)
    hits = _binary_relevance(RankedList(query_id, ranked.entries), qrels)
    if hits.sum() == 0:
        return 0.0
    ranks = np.arange(1, len(hits) + 1, dtype=np.float64)
    precision_at_hits = np.cumsum(hits)[hits > 0] / ranks[hits > 0]
    return float(precision_at_hits.sum() / num_relevant)


def precision_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    hits = _binary_relevance(ranked.top(k), qrels)
    return float(hits.sum() / k)


def recall_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    num_relevant = _require_relevant(qrels, ranked.query_id)
    hits = _binary_relevance(ranked.top(k), qrels)
    return float(hits.sum() / num_relevant)


def mrr_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    hits = _binary_relevance(ranked.top(k), qrels)
    positions = np.flatnonzero(hits)
    if positions.size == 0:
        return 0.0
    return 1.0 / float(positions[0] + 1)


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    judged = qrels.judged(ranked.query_id)
    doc_ids = ranked.top(k).doc_ids
    grades = np.array([judged.get(d, 0) for d in doc_ids],
                      dtype=np.float64) * _first_occurrences(doc_ids)
    ideal = np.sort(np.array(list(judged.values()), dtype=np.float64))[::-1]
    ideal = ideal[:k]
    ideal_dcg = float(
        np.sum((2.0**ideal - 1.0) / np.log2(np.arange(2, ideal.size + 2))))
    if ideal_dcg == 0.0:
        return 0.0
    dcg = float(
        np.sum((2.0**grades - 1.0) / np.log2(np.arange(2, grades.size + 2))))
    return dcg / ideal_dcg


def score_query(spec: MetricSpec, ranked: RankedList,
                qrels: Qrels) -> Optional[float]:
    """One query's value, or ``None`` when the metric is undefined for it."""
    if (spec.name in _UNDEFINED_WITHOUT_RELEVANT and
            qrels.num_relevant(ranked.query_id) == 0):
        return None
    if spec.name == 'ap':
        return average_precision(ranked, qrels)
    assert spec.cutoff is not None
    if spec.name == 'p':
        return precision_at_k(ranked, qrels, spec.cutoff)
    if spec.name == 'r':
        return recall_at_k(ranked, qrels, spec.cutoff)
    if spec.name == 'mrr':
        return mrr_at_k(ranked, qrels, spec.cutoff)
    if spec.name == 'ndcg':
        return ndcg_at_k(ranked, qrels, spec.cutoff)
    raise ValueError(f'Not sure how to score metric {spec.name}.')


def evaluation_query_ids(qrels: Qrels,
                         query_ids: Optional[Iterable[str]] = None
                        ) -> List[str]:
    """The judged topics, optionally restricted to ``query_ids``."""
    if query_ids is None:
        return qrels.query_ids()
    wanted = set(query_ids)
    return [query_id for query_id in qrels.query_ids() if query_id in wanted]


def evaluate_run(run: RunSet,
                 qrels: Qrels,
                 spec: MetricSpec,
                 query_ids: Optional[Iterable[str]] = None) -> MetricReport:
    """Scores every evaluated query and folds them in query-id order.

    Queries missing from the run count as empty rankings. Queries for which
    the metric is undefined are listed in ``skipped``.
    """
    per_query: Dict[str, float] = {}
    skipped = []
    for query_id in evaluation_query_ids(qrels, query_ids):
        value = score_query(spec, run.get(query_id), qrels)
        if value is None:
            skipped.append(query_id)
        else:
            per_query[query_id] = value

    if not per_query:
        raise ValueError(
            f'Every query was skipped for {spec.label}; nothing to evaluate.')
    if skipped:
        warnings.warn(f'{spec.label}: skipped {len(skipped)} queries without '
                      'relevant documents.')
    aggregate = float(np.mean([per_query[q] for q in sorted(per_query)]))
    return MetricReport(metric_name=spec.name,
                        cutoff=spec.cutoff,
                        per_query=per_query,
                        aggregate=aggregate,
                        skipped=tuple(skipped))
