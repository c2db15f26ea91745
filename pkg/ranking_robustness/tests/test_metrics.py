# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

import io
import math

import numpy as np
import pytest
from src.metrics import (MetricSpec, average_precision, evaluate_run,
                         mrr_at_k, ndcg_at_k, parse_metric, precision_at_k,
                         recall_at_k, score_query)
from src.records import RankedList
from src.trec_io import parse_qrels, parse_run

from tests.utils import make_qrels, make_run


def ranked(docs, query_id='q1'):
    return make_run({query_id: docs}).get(query_id)


def test_average_precision_examples():
    qrels = make_qrels([('q1', 'd1', 1)])
    assert average_precision(ranked(['d1', 'd2']), qrels) == 1.0

    qrels = make_qrels([('q1', 'r1', 1), ('q1', 'r2', 1)])
    assert average_precision(ranked(['x1', 'r1', 'x2', 'x3', 'r2']),
                             qrels) == pytest.approx(0.45, abs=1e-12)
    assert average_precision(ranked(['x1', 'x2']), qrels) == 0.0

    with pytest.raises(ValueError):
        average_precision(ranked(['x1']), make_qrels([('q1', 'x1', 0)]))


def test_cutoff_metrics():
    qrels = make_qrels([('q1', 'a', 1), ('q1', 'b', 1), ('q1', 'c', 1)])
    run = ranked(['x', 'y', 'a', 'b'])
    assert precision_at_k(run, qrels, 2) == 0.0
    assert precision_at_k(run, qrels, 10) == pytest.approx(0.2)
    assert recall_at_k(run, qrels, 4) == pytest.approx(2 / 3)
    assert mrr_at_k(run, qrels, 10) == pytest.approx(1 / 3)
    assert mrr_at_k(run, qrels, 2) == 0.0


def test_ideal_list_attains_maximum():
    qrels = make_qrels([('q1', d, 1) for d in 'abcde'])
    run = ranked(list('abcde'))
    assert precision_at_k(run, qrels, 5) == 1.0
    assert ndcg_at_k(run, qrels, 5) == pytest.approx(1.0)
    assert average_precision(run, qrels) == 1.0
    assert recall_at_k(run, qrels, 5) == 1.0
    assert mrr_at_k(run, qrels, 1) == 1.0


def test_graded_ndcg_example():
    qrels = make_qrels([('q1', 'a', 2), ('q1', 'b', 0), ('q1', 'c', 1)])
    expected = 3.5 / (3 + 1 / math.log2(3))
    assert ndcg_at_k(ranked(['a', 'b', 'c']), qrels,
                     3) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.9639, abs=1e-4)


def test_queries_without_relevant_documents():
    qrels = make_qrels([('q1', 'a', 0)])
    run = ranked(['a'])
    assert score_query(MetricSpec('ap'), run, qrels) is None
    assert score_query(MetricSpec('r', 10), run, qrels) is None
    assert score_query(MetricSpec('ndcg', 10), run, qrels) is None
    assert score_query(MetricSpec('p', 10), run, qrels) == 0.0
    assert score_query(MetricSpec('mrr', 10), run, qrels) == 0.0


@pytest.mark.parametrize('label,spec', [
    ('map', MetricSpec('ap')),
    ('ndcg@20', MetricSpec('ndcg', 20)),
    ('P@10', MetricSpec('p', 10)),
    ('recall@20', MetricSpec('r', 20)),
    ('mrr@100', MetricSpec('mrr', 100)),
])
def test_parse_metric(label, spec):
    assert parse_metric(label) == spec


@pytest.mark.parametrize('label', ['ndcg', 'p@0', 'err@10', 'map@@1'])
def test_parse_metric_rejects(label):
    with pytest.raises(ValueError):
        parse_metric(label)


def test_evaluate_run_skips_and_folds():
    qrels = make_qrels([('q1', 'a', 1), ('q2', 'b', 0), ('q3', 'c', 1)])
    run = make_run({'q1': ['a', 'x'], 'q2': ['b']})
    with pytest.warns(UserWarning, match='skipped 1'):
        report = evaluate_run(run, qrels, MetricSpec('ap'))
    assert report.per_query == {'q1': 1.0, 'q3': 0.0}
    assert report.skipped == ('q2',)
    assert report.aggregate == 0.5
    assert report.label == 'map'

    restricted = evaluate_run(run, qrels, MetricSpec('p', 1), ['q1', 'q2'])
    assert restricted.per_query == {'q1': 1.0, 'q2': 0.0}

    with pytest.raises(ValueError, match='Every query was skipped'):
        evaluate_run(run, qrels, MetricSpec('ap'), ['q2'])


# Independent direct-formula oracles.
def oracle_ap(docs, grades):
    relevant = {d for d, g in grades.items() if g > 0}
    total, found = 0.0, 0
    for rank, doc in enumerate(docs, start=1):
        if doc in relevant:
            found += 1
            total += found / rank
    return total / len(relevant)


def oracle_precision(docs, grades, k):
    return sum(1 for d in docs[:k] if grades.get(d, 0) > 0) / k


def oracle_recall(docs, grades, k):
    relevant = sum(1 for g in grades.values() if g > 0)
    return sum(1 for d in docs[:k] if grades.get(d, 0) > 0) / relevant


def oracle_mrr(docs, grades, k):
    for rank, doc in enumerate(docs[:k], start=1):
        if grades.get(doc, 0) > 0:
            return 1.0 / rank
    return 0.0


def oracle_ndcg(docs, grades, k):

    def dcg(values):
        return sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(values))

    ideal = dcg(sorted(grades.values(), reverse=True)[:k])
    if ideal == 0:
        return 0.0
    return dcg([grades.get(d, 0) for d in docs[:k]]) / ideal


def random_instance(rng):
    num_queries = int(rng.integers(1, 21))
    num_docs = int(rng.integers(1, 51))
    pool = [f'd{i}' for i in range(num_docs)]
    lists, judgments = {}, []
    for q in range(num_queries):
        query_id = f'q{q}'
        length = int(rng.integers(0, num_docs + 1))
        lists[query_id] = list(rng.permutation(pool)[:length])
        judged = rng.permutation(pool)[:int(rng.integers(1, num_docs + 1))]
        grades = rng.integers(0, 4, size=len(judged))
        grades[0] = max(grades[0], 1)
        judgments.extend(
            (query_id, str(d), int(g)) for d, g in zip(judged, grades))
    return make_run(lists), make_qrels(judgments)


def test_metrics_match_direct_formula_oracles():
    rng = np.random.default_rng(42)
    for _ in range(200):
        run, qrels = random_instance(rng)
        k = int(rng.integers(1, 30))
        for query_id in qrels.query_ids():
            docs = run.get(query_id).doc_ids
            grades = qrels.judged(query_id)
            result = run.get(query_id)
            assert average_precision(result, qrels) == pytest.approx(
                oracle_ap(docs, grades), abs=1e-10)
            assert precision_at_k(result, qrels, k) == pytest.approx(
                oracle_precision(docs, grades, k), abs=1e-10)
            assert recall_at_k(result, qrels, k) == pytest.approx(
                oracle_recall(docs, grades, k), abs=1e-10)
            assert mrr_at_k(result, qrels, k) == pytest.approx(
                oracle_mrr(docs, grades, k), abs=1e-10)
            assert ndcg_at_k(result, qrels, k) == pytest.approx(
                oracle_ndcg(docs, grades, k), abs=1e-10)
            for spec in (MetricSpec('ap'), MetricSpec('ndcg', k)):
                value = score_query(spec, result, qrels)
                assert value is not None and 0.0 <= value <= 1.0 + 1e-12


def test_ranked_list_shorter_than_cutoff():
    qrels = make_qrels([('q1', 'a', 1)])
    assert precision_at_k(RankedList('q1', (('a', 1.0),)), qrels, 20) == 0.05


def test_repeated_documents_count_once():
    with pytest.warns(UserWarning, match='duplicate doc id r1'):
        run = parse_run(io.StringIO('q1 Q0 r1 1 2.0 t\nq1 Q0 r1 2 1.0 t\n'))
    qrels = parse_qrels(io.StringIO('q1 0 r1 1\n'))
    ranked_list = run.get('q1')
    assert len(ranked_list) == 2
    assert average_precision(ranked_list, qrels) == 1.0
    assert recall_at_k(ranked_list, qrels, 10) == 1.0
    assert precision_at_k(ranked_list, qrels, 10) == pytest.approx(0.1)
    assert mrr_at_k(ranked_list, qrels, 10) == 1.0
    assert ndcg_at_k(ranked_list, qrels, 10) == pytest.approx(1.0)

    repeated = RankedList('q1', (('b', 3.0), ('a', 2.0), ('a', 1.0)))
    qrels = make_qrels([('q1', 'a', 1)])
    assert average_precision(repeated, qrels) == 0.5
    assert ndcg_at_k(repeated, qrels, 3) == pytest.approx(1 / math.log2(3))
