# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Reference lexical rankers: Okapi BM25 and Dirichlet-smoothed QL.

BM25 uses the idf ``ln((N - df + 0.5) / (df + 0.5) + 1)``, which stays
positive for terms that occur in most documents. Query terms that repeat
add their contribution once per occurrence.

QL scores ``sum ln((tf + mu * P(t|C)) / (|d| + mu))`` over query term
occurrences. Terms never seen in the collection are skipped and counted in
:class:`ScoreDiagnostics` instead of getting a floor probability.

Both rankers score through one vectorized kernel over a
:class:`~src.index.CandidateMatrix`; the single-document functions call the
same kernel, so a ranked list always agrees with scoring documents one by
one.
"""

import itertools
from dataclasses import asdict, dataclass, field
from typing import (Any, Callable, Dict, Iterable, List, Mapping, Optional,
                    Sequence, Tuple)

import numpy as np

from src.index import CandidateMatrix, InvertedIndex
from src.metrics import MetricSpec, evaluate_run
from src.parallel import map_ordered, worker_state
from src.records import (DataFault, QueryRecord, Qrels, RankedList, RunSet,
                         check_unique_ids)
from src.text import tokenize

__all__ = [
    'MODELS', 'DEFAULT_GRIDS', 'RankerConfig', 'ScoreDiagnostics',
    'TuneResult', 'bm25_score', 'ql_dirichlet_score', 'rank', 'search',
    'expand_grid', 'grid_tune', 'RANKER_REGISTRY'
]

MODELS = ('bm25', 'ql_dirichlet')
_MODEL_ALIASES = {'ql': 'ql_dirichlet', 'qld': 'ql_dirichlet'}
_MODEL_PARAMS = {'bm25': ('k1', 'b'), 'ql_dirichlet': ('mu',)}

# mu in 1-2000 by 10; k1 in 0.1-5 by 0.1; b in 0.1-1 by 0.1.
DEFAULT_GRIDS: Dict[str, Dict[str, List[float]]] = {
    'bm25': {
        'k1': [round(0.1 * i, 1) for i in range(1, 51)],
        'b': [round(0.1 * i, 1) for i in range(1, 11)],
    },
    'ql_dirichlet': {
        'mu': [float(mu) for mu in range(1, 2001, 10)],
    },
}


def canonical_model(model: str) -> str:
    model = _MODEL_ALIASES.get(model, model)
    if model not in MODELS:
        raise ValueError(f'Not sure how to build ranker with name={model}')
    return model


@dataclass(frozen=True)
class RankerConfig:
    model: str = 'bm25'
    k1: float = 1.2
    b: float = 0.75
    mu: float = 1000.0
    top_k: int = 1000
    # QL only: score every document instead of the query-term postings.
    score_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'model', canonical_model(self.model))
        if self.model == 'bm25':
            if not self.k1 > 0:
                raise ValueError(f'k1 must be > 0, got {self.k1}.')
            if not 0.0 <= self.b <= 1.0:
                raise ValueError(f'b must be in [0, 1], got {self.b}.')
        if self.model == 'ql_dirichlet' and not self.mu > 0:
            raise ValueError(f'mu must be > 0, got {self.mu}.')
        if self.top_k < 1:
            raise ValueError(f'top_k must be >= 1, got {self.top_k}.')

    def params(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in _MODEL_PARAMS[self.model]}

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ScoreDiagnostics:
    oov_terms: int = 0
    unmatched_queries: List[str] = field(default_factory=list)

    def merge(self, other: 'ScoreDiagnostics') -> None:
        self.oov_terms += other.oov_terms
        self.unmatched_queries.extend(other.unmatched_queries)


def _bm25_scores(index: InvertedIndex, matrix: CandidateMatrix, k1: float,
                 b: float) -> np.ndarray:
    scores = np.zeros(len(matrix), dtype=np.float64)
    if len(matrix) == 0:
        return scores
    norm = k1 * (1.0 - b + b * matrix.doc_length / index.avgdl)
    for column in range(len(matrix.terms)):
        df = matrix.doc_freq[column]
        if df == 0:
            continue
        idf = np.log((index.doc_count - df + 0.5) / (df + 0.5) + 1.0)
        tf = matrix.tf[:, column]
        matched = tf > 0
        contribution = np.zeros_like(tf)
        contribution[matched] = (idf * tf[matched] * (k1 + 1.0) /
                                 (tf[matched] + norm[matched]))
        scores += matrix.query_tf[column] * contribution
    return scores


def _ql_scores(index: InvertedIndex, matrix: CandidateMatrix, mu: float,
               diagnostics: ScoreDiagnostics) -> np.ndarray:
    scores = np.zeros(len(matrix), dtype=np.float64)
    for column in range(len(matrix.terms)):
        collection_tf = matrix.collection_tf[column]
        if collection_tf == 0:
            diagnostics.oov_terms += int(matrix.query_tf[column])
            continue
        if len(matrix) == 0:
            continue
        p_collection = collection_tf / index.collection_length
        contribution = np.log((matrix.tf[:, column] + mu * p_collection) /
                              (matrix.doc_length + mu))
        scores += matrix.query_tf[column] * contribution
    return scores


def _score_bm25(index: InvertedIndex, matrix: CandidateMatrix,
                config: RankerConfig,
                diagnostics: ScoreDiagnostics) -> np.ndarray:
    del diagnostics  # BM25 has nothing to report
    return _bm25_scores(index, matrix, config.k1, config.b)


def _score_ql(index: InvertedIndex, matrix: CandidateMatrix,
              config: RankerConfig,
              diagnostics: ScoreDiagnostics) -> np.ndarray:
    return _ql_scores(index, matrix, config.mu, diagnostics)


RANKER_REGISTRY: Dict[str, Callable[
    [InvertedIndex, CandidateMatrix, RankerConfig, ScoreDiagnostics],
    np.ndarray]] = {
        'bm25': _score_bm25,
        'ql_dirichlet': _score_ql,
    }


def bm25_score(index: InvertedIndex, query_terms: Sequence[str], doc_id: str,
               k1: float, b: float) -> float:
    index.require_doc(doc_id)
    if k1 < 0:
        raise ValueError(f'k1 must be >= 0, got {k1}.')
    if not 0.0 <= b <= 1.0:
        raise ValueError(f'b must be in [0, 1], got {b}.')
    matrix = index.candidate_matrix(query_terms, [doc_id])
    return float(_bm25_scores(index, matrix, k1, b)[0])


def ql_dirichlet_score(index: InvertedIndex,
                       query_terms: Sequence[str],
                       doc_id: str,
                       mu: float,
                       diagnostics: Optional[ScoreDiagnostics] = None
                      ) -> float:
    index.require_doc(doc_id)
    if not mu > 0:
        raise ValueError(f'mu must be > 0, got {mu}.')
    diagnostics = diagnostics if diagnostics is not None else ScoreDiagnostics(
    )
    matrix = index.candidate_matrix(query_terms, [doc_id])
    return float(_ql_scores(index, matrix, mu, diagnostics)[0])


def _candidate_docs(index: InvertedIndex, config: RankerConfig,
                    candidates: Optional[Iterable[str]]
                   ) -> Optional[List[str]]:
    if candidates is not None:
        return list(candidates)
    if config.model != 'ql_dirichlet':
        return None
    if config.score_all:
        return index.doc_ids
    return None


def rank_matrix(index: InvertedIndex, query_id: str, matrix: CandidateMatrix,
                config: RankerConfig,
                diagnostics: ScoreDiagnostics) -> RankedList:
    """Scores, sorts (descending, ties by doc id) and truncates to top_k."""
    scores = RANKER_REGISTRY[config.model](index, matrix, config, diagnostics)
    if len(matrix) == 0 or not np.any(matrix.collection_tf > 0):
        diagnostics.unmatched_queries.append(query_id)
        return RankedList(query_id)
    if config.model == 'bm25':
        # Only documents sharing a term with the query are ranked.
        keep = matrix.tf.sum(axis=1) > 0
        pairs = [(doc_id, score)
                 for doc_id, score, kept in zip(matrix.doc_ids, scores.tolist(),
                                                keep.tolist())
                 if kept]
    else:
        pairs = list(zip(matrix.doc_ids, scores.tolist()))
    return RankedList.from_scores(query_id, pairs, top_k=config.top_k)


def rank(index: InvertedIndex,
         query: QueryRecord,
         config: RankerConfig,
         diagnostics: Optional[ScoreDiagnostics] = None,
         candidates: Optional[Iterable[str]] = None) -> RankedList:
    """Ranks the documents matching ``query``.

    Args:
        index (InvertedIndex): Index built with the tokenizer config the
            query should be processed with.
        query (QueryRecord): The query.
        config (RankerConfig): Model, parameters and ``top_k``.
        diagnostics (ScoreDiagnostics, optional): Collects OOV counts and
            queries that matched nothing.
        candidates (Iterable[str], optional): An explicit candidate set
            (e.g. a first-stage top-100) to re-rank. BM25 still drops
            candidates that share no term with the query.
    """
    diagnostics = diagnostics if diagnostics is not None else ScoreDiagnostics(
    )
    terms = tokenize(query.text, index.tokenizer_config)
    matrix = index.candidate_matrix(terms,
                                    _candidate_docs(index, config, candidates))
    return rank_matrix(index, query.id, matrix, config, diagnostics)


def _rank_worker(query: QueryRecord) -> Tuple[RankedList, ScoreDiagnostics]:
    state = worker_state()
    diagnostics = ScoreDiagnostics()
    pools = state.get('candidates')
    ranked = rank(state['index'], query, state['config'], diagnostics,
                  pools.get(query.id, []) if pools is not None else None)
    return ranked, diagnostics


def search(index: InvertedIndex,
           queries: Sequence[QueryRecord],
           config: RankerConfig,
           run_tag: Optional[str] = None,
           threads: int = 1,
           progress_bar: bool = False,
           candidates: Optional[Mapping[str, Sequence[str]]] = None
          ) -> Tuple[RunSet, ScoreDiagnostics]:
    """Ranks every query; the run is identical for any ``threads``.

    ``candidates`` maps query ids to the pool each query re-ranks; a query
    missing from it gets an empty pool.
    """
    check_unique_ids(queries, 'query')
    results = map_ordered(_rank_worker,
                          list(queries),
                          state={
                              'index': index,
                              'config': config,
                              'candidates': candidates,
                          },
                          threads=threads,
                          progress_bar=progress_bar)
    diagnostics = ScoreDiagnostics()
    lists = {}
    for ranked, query_diagnostics in results:
        lists[ranked.query_id] = ranked
        diagnostics.merge(query_diagnostics)
    return RunSet(run_tag=run_tag or config.model, lists=lists), diagnostics


@dataclass(frozen=True)
class TuneResult:
    config: RankerConfig
    value: float
    objective: str
    trace: Tuple[Tuple[RankerConfig, float], ...] = ()


def expand_grid(model: str,
                grid: Mapping[str, Sequence[float]],
                base: Optional[RankerConfig] = None) -> List[RankerConfig]:
    """Enumerates a parameter grid in ascending order of each parameter.

    Parameters are varied in the order ``k1, b`` (BM25) or ``mu`` (QL); the
    first parameter changes slowest. Parameters missing from ``grid`` keep
    the value of ``base``.
    """
    model = canonical_model(model)
    names = _MODEL_PARAMS[model]
    unknown = set(grid) - set(names)
    if unknown:
        raise ValueError(
            f'Unknown {model} grid parameters {sorted(unknown)}; '
            f'expected {list(names)}.')
    base = base if base is not None else RankerConfig(model=model)
    axes = []
    for name in names:
        values = grid.get(name, [getattr(base, name)])
        axes.append(sorted({float(value) for value in values}))
    configs = []
    for values in itertools.product(*axes):
        params = asdict(base)
        params.update(model=model, **dict(zip(names, values)))
        configs.append(RankerConfig(**params))
    return configs


def _evaluate_grid_point(config: RankerConfig) -> float:
    state = worker_state()
    index = state['index']
    diagnostics = ScoreDiagnostics()
    lists = {
        query_id: rank_matrix(index, query_id, matrix, config, diagnostics)
        for query_id, matrix in state['matrices'].items()
    }
    report = evaluate_run(RunSet(run_tag=config.model, lists=lists),
                          state['qrels'],
                          state['objective'],
                          query_ids=list(state['matrices']))
    return report.aggregate


def grid_tune(index: InvertedIndex,
              queries: Sequence[QueryRecord],
              qrels: Qrels,
              model: str,
              grid: Optional[Mapping[str, Sequence[float]]] = None,
              objective: MetricSpec = MetricSpec('ap'),
              base: Optional[RankerConfig] = None,
              threads: int = 1,
              progress_bar: bool = False) -> TuneResult:
    """Exhaustive grid search; ties go to the earliest grid point."""
    if len(queries) == 0:
        raise DataFault('Cannot tune on an empty query set.')
    check_unique_ids(queries, 'query')
    model = canonical_model(model)
    grid = DEFAULT_GRIDS[model] if grid is None else grid
    configs = expand_grid(model, grid, base)
    if not configs:
        raise ValueError(f'The {model} grid is empty.')

    matrices = {}
    for query in queries:
        terms = tokenize(query.text, index.tokenizer_config)
        matrices[query.id] = index.candidate_matrix(
            terms, _candidate_docs(index, configs[0], None))
    values = map_ordered(_evaluate_grid_point,
                         configs,
                         state={
                             'index': index,
                             'matrices': matrices,
                             'qrels': qrels,
                             'objective': objective,
                         },
                         threads=threads,
                         progress_bar=progress_bar)

    best = 0
    for position, value in enumerate(values):
        if value > values[best]:
            best = position
    return TuneResult(config=configs[best],
                      value=values[best],
                      objective=objective.label,
                      trace=tuple(zip(configs, values)))
