# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Robustness measures computed on top of per-query effectiveness.

* performance variance: :func:`vnap` (variance of AP normalized by its mean)
  and the raw :func:`variance_of_metric`;
* poorly performing queries: :func:`pct_no` and :func:`gmap`;
* generalization and attack robustness: :func:`drop_rate`, always with a
  :func:`paired_significance` p-value next to it.
"""

import math
import warnings
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.metrics import evaluation_query_ids
from src.records import Qrels, RunSet

__all__ = [
    'DEFAULT_EPSILON', 'PCT_NO_DEPTH', 'nap_values', 'vnap',
    'variance_of_metric', 'pct_no', 'gmap', 'drop_rate',
    'paired_significance', 'pearson_correlation', 'robustness_extras'
]

DEFAULT_EPSILON = 1e-5
PCT_NO_DEPTH = 10


def _ordered_values(per_query: Mapping[str, float]) -> np.ndarray:
    return np.array([per_query[q] for q in sorted(per_query)],
                    dtype=np.float64)


def nap_values(ap_per_query: Mapping[str, float]) -> Dict[str, float]:
    """AP of each query divided by the mean AP of the set."""
    if not ap_per_query:
        raise ValueError('VNAP undefined: no queries.')
    mean_ap = float(np.mean(_ordered_values(ap_per_query)))
    if mean_ap == 0.0:
        raise ValueError('VNAP undefined: zero mean AP')
    return {
        query_id: ap / mean_ap for query_id, ap in sorted(ap_per_query.items())
    }


def vnap(ap_per_query: Mapping[str, float]) -> float:
    """Population variance of the normalized APs (their mean is 1)."""
    nap = _ordered_values(nap_values(ap_per_query))
    return float(np.mean((nap - 1.0)**2))


def variance_of_metric(per_query: Mapping[str, float]) -> float:
    if not per_query:
        raise ValueError('Variance undefined: no queries.')
    return float(np.var(_ordered_values(per_query)))


def pct_no(runs: RunSet,
           qrels: Qrels,
           query_ids: Optional[Iterable[str]] = None,
           depth: int = PCT_NO_DEPTH) -> float:
    """Fraction of queries with no relevant document in the top ``depth``.

    Queries without any relevant judgment are not counted, unlike the plain
    "fraction of evaluated queries" reading (see the %no decision in
    DESIGN.md). A query missing from the run counts as an empty ranking.
    """
    evaluated = [
        query_id for query_id in evaluation_query_ids(qrels, query_ids)
        if qrels.num_relevant(query_id) > 0
    ]
    if not evaluated:
        return 0.0
    failures = 0
    for query_id in evaluated:
        top = runs.get(query_id).top(depth)
        if not any(qrels.is_relevant(query_id, d) for d in top.doc_ids):
            failures += 1
    return failures / len(evaluated)


def gmap(ap_per_query: Mapping[str, float],
         epsilon: float = DEFAULT_EPSILON) -> float:
    """Geometric mean of ``AP + epsilon``, minus ``epsilon``."""
    if not epsilon > 0:
        raise ValueError(f'epsilon must be > 0, got {epsilon}.')
    values = _ordered_values(ap_per_query)
    if values.size == 0:
        raise ValueError('gMAP undefined: no queries.')
    if np.any(values < 0):
        raise ValueError('gMAP requires non-negative AP values.')
    if values.size == 1:
        return float(values[0])
    return float(np.exp(np.mean(np.log(values + epsilon))) - epsilon)


def drop_rate(treated: float, baseline: float) -> float:
    """Signed relative change ``(treated - baseline) / baseline``."""
    if baseline == 0:
        raise ValueError('drop rate undefined: baseline is 0')
    return (treated - baseline) / baseline


def _shared_differences(a: Mapping[str, float],
                        b: Mapping[str, float]) -> Tuple[np.ndarray,
                                                         np.ndarray]:
    shared = sorted(set(a) & set(b))
    return (np.array([a[q] for q in shared], dtype=np.float64),
            np.array([b[q] for q in shared], dtype=np.float64))


def paired_significance(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    """Two-sided paired t-test p-value over the queries ``a`` and ``b`` share.

    When every per-query difference is identical the t statistic is
    undefined; the p-value is then 1.0 for a zero difference and 0.0 for a
    constant non-zero one.
    """
    left, right = _shared_differences(a, b)
    if left.size < 2:
        raise ValueError(
            f'Paired significance needs >= 2 shared queries, got {left.size}.'
        )
    differences = left - right
    if np.all(differences == differences[0]):
        return 1.0 if differences[0] == 0 else 0.0
    result = stats.ttest_rel(left, right)
    p_value = float(result.pvalue)
    if math.isnan(p_value):
        return 1.0
    return min(max(p_value, 0.0), 1.0)


def pearson_correlation(xs: Sequence[float],
                        ys: Sequence[float]) -> Tuple[float, float]:
    """Pearson r (and its p-value) between two per-system measures."""
    if len(xs) != len(ys):
        raise ValueError('Pearson correlation needs paired values.')
    if len(xs) < 3:
        raise ValueError(
            f'Pearson correlation needs >= 3 systems, got {len(xs)}.')
    result = stats.pearsonr(np.asarray(xs, dtype=np.float64),
                            np.asarray(ys, dtype=np.float64))
    return float(result[0]), float(result[1])


def robustness_extras(ap_per_query: Mapping[str, float],
                      run: RunSet,
                      qrels: Qrels,
                      epsilon: float = DEFAULT_EPSILON,
                      query_ids: Optional[Iterable[str]] = None
                     ) -> Dict[str, float]:
    """VNAP, gMAP, %no and the raw AP variance of one evaluated run."""
    extras = {
        'gmap': gmap(ap_per_query, epsilon),
        'pct_no': pct_no(run, qrels, query_ids),
        'variance': variance_of_metric(ap_per_query),
        'epsilon': epsilon,
    }
    try:
        extras['vnap'] = vnap(ap_per_query)
    except ValueError as e:
        warnings.warn(str(e))
    return extras
