# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Distances between two rankings of the same queries.

Top Change (TC) counts queries whose first document changed; Kendall's tau
distance (KT) counts discordant document pairs. Both are used to measure how
much a ranker's output moves when the documents are manipulated between
rounds.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from src.records import RankedList, RunSet

__all__ = [
    'ListDistanceResult', 'top_change', 'kendall_tau_distance',
    'restrict_to_common', 'compare_runs'
]


class TopChange(NamedTuple):
    value: float
    per_query: Dict[str, float]
    skipped: Tuple[str, ...]


@dataclass(frozen=True)
class ListDistanceResult:
    tc: float
    kt: float
    # query id -> {'tc': ..., 'kt': ...}; 'kt' is absent below 2 common docs
    per_query: Dict[str, Dict[str, float]] = field(default_factory=dict)
    skipped: Tuple[str, ...] = ()
    kt_skipped: Tuple[str, ...] = ()


def top_change(before: RunSet, after: RunSet) -> TopChange:
    """Fraction of shared queries whose rank-1 document differs.

    Queries with an empty list on either side are skipped.
    """
    shared = sorted(set(before.query_ids()) & set(after.query_ids()))
    if not shared:
        raise ValueError(
            f'Runs {before.run_tag} and {after.run_tag} share no query.')
    per_query = {}
    skipped = []
    for query_id in shared:
        left, right = before.get(query_id), after.get(query_id)
        if not len(left) or not len(right):
            skipped.append(query_id)
            continue
        per_query[query_id] = float(left.doc_ids[0] != right.doc_ids[0])
    if not per_query:
        raise ValueError('Top change undefined: every shared query is empty.')
    value = float(np.mean([per_query[q] for q in sorted(per_query)]))
    return TopChange(value, per_query, tuple(skipped))


def kendall_tau_distance(before: RankedList, after: RankedList) -> float:
    """Normalized count of pairs ordered differently by the two lists.

    Both lists must hold exactly the same documents; use
    :func:`restrict_to_common` first when they come from different
    retrievals.
    """
    left, right = before.doc_ids, after.doc_ids
    difference = set(left) ^ set(right)
    if difference or len(left) != len(right):
        raise ValueError('Kendall tau needs identical document sets; '
                         f'symmetric difference: {sorted(difference)}')
    n = len(left)
    if n < 2:
        raise ValueError(f'Kendall tau needs >= 2 documents, got {n}.')

    position = {doc_id: rank for rank, doc_id in enumerate(right)}
    other = np.array([position[doc_id] for doc_id in left], dtype=np.int64)
    # ``left`` is in rank order, so the pair (i, j) with i < j is discordant
    # exactly when ``after`` puts j first.
    upper = np.triu_indices(n, k=1)
    discordant = int(np.count_nonzero(other[upper[0]] > other[upper[1]]))
    return discordant / (n * (n - 1) / 2)


def restrict_to_common(before: RankedList,
                       after: RankedList) -> Tuple[RankedList, RankedList]:
    common = set(before.doc_ids) & set(after.doc_ids)
    return (RankedList(before.query_id,
                       tuple(e for e in before.entries if e[0] in common)),
            RankedList(after.query_id,
                       tuple(e for e in after.entries if e[0] in common)))


def _compare_pair(before: RunSet, after: RunSet) -> Tuple[Dict[str, Dict[
        str, float]], List[str]]:
    tc = top_change(before, after)
    per_query = {}
    for query_id, changed in tc.per_query.items():
        values = {'tc': changed}
        left, right = restrict_to_common(before.get(query_id),
                                         after.get(query_id))
        # KT is undefined below 2 common documents; TC still counts.
        if len(left) >= 2:
            values['kt'] = kendall_tau_distance(left, right)
        per_query[query_id] = values
    return per_query, list(tc.skipped)


def compare_runs(runs: Sequence[RunSet]) -> ListDistanceResult:
    """TC and KT between runs, averaged over consecutive pairs.

    With two runs this is a plain comparison. With more, each run is one
    round of a document-manipulation competition and every query's values
    are averaged over the consecutive round pairs it takes part in.

    TC is averaged over every query :func:`top_change` scores. KT is
    averaged over the queries with at least 2 common documents in some
    pair; the others are listed in ``kt_skipped``.
    """
    if len(runs) < 2:
        raise ValueError(f'Need at least 2 runs to compare, got {len(runs)}.')

    totals: Dict[str, Dict[str, List[float]]] = {}
    skipped = set()
    for before, after in zip(runs[:-1], runs[1:]):
        per_query, pair_skipped = _compare_pair(before, after)
        skipped.update(pair_skipped)
        for query_id, values in per_query.items():
            bucket = totals.setdefault(query_id, {'tc': [], 'kt': []})
            bucket['tc'].append(values['tc'])
            if 'kt' in values:
                bucket['kt'].append(values['kt'])

    per_query = {}
    for query_id in sorted(totals):
        values = {'tc': float(np.mean(totals[query_id]['tc']))}
        if totals[query_id]['kt']:
            values['kt'] = float(np.mean(totals[query_id]['kt']))
        per_query[query_id] = values
    with_kt = [v['kt'] for v in per_query.values() if 'kt' in v]
    if not with_kt:
        raise ValueError('No query has >= 2 common documents in any pair.')
    return ListDistanceResult(
        tc=float(np.mean([v['tc'] for v in per_query.values()])),
        kt=float(np.mean(with_kt)),
        per_query=per_query,
        skipped=tuple(sorted(skipped - set(per_query))),
        kt_skipped=tuple(q for q, v in per_query.items() if 'kt' not in v))
