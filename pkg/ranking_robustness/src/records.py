# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Domain records shared by the indexer, rankers, metrics and attacks.

Everything here is treated as immutable once built and does no I/O. The
records stay plain picklable values so they can be shipped to worker
processes.
"""

from dataclasses import dataclass, field
from typing import (Any, Dict, Iterable, Iterator, List, Mapping, Optional,
                    Sequence, Set, Tuple)

__all__ = [
    'DataFault', 'QueryRecord', 'DocRecord', 'Qrels', 'RankedList', 'RunSet',
    'MetricReport', 'validate_ranked_list', 'filter_queries',
    'check_unique_ids'
]


class DataFault(ValueError):
    """A malformed or inconsistent input artifact.

    Args:
        message (str): What went wrong.
        source (str, optional): File name or stream label. Default: ``None``.
        line (int, optional): 1-based line number. Default: ``None``.
    """

    def __init__(self,
                 message: str,
                 source: Optional[str] = None,
                 line: Optional[int] = None):
        self.source = source
        self.line = line
        where = ''
        if source is not None and line is not None:
            where = f'{source}:{line}: '
        elif source is not None:
            where = f'{source}: '
        elif line is not None:
            where = f'line {line}: '
        super().__init__(f'{where}{message}')


@dataclass(frozen=True)
class QueryRecord:
    id: str
    text: str
    group: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError('Query id must be non-empty.')
        if not self.text.strip():
            raise ValueError(f'Query {self.id} has empty text.')


@dataclass(frozen=True)
class DocRecord:
    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError('Document id must be non-empty.')


class Qrels:
    """Graded relevance judgments keyed by (query id, doc id).

    Unjudged pairs have grade 0. A grade > 0 means relevant.

    Args:
        judgments (Mapping[Tuple[str, str], int]): Grade per judged pair.
    """

    def __init__(self, judgments: Mapping[Tuple[str, str], int]):
        by_query: Dict[str, Dict[str, int]] = {}
        for (query_id, doc_id), grade in judgments.items():
            if isinstance(grade, bool) or not isinstance(grade, int):
                raise ValueError(
                    f'Grade for ({query_id}, {doc_id}) must be an integer, got {grade!r}.'
                )
            if grade < 0:
                raise ValueError(
                    f'Grade for ({query_id}, {doc_id}) must be >= 0, got {grade}.'
                )
            by_query.setdefault(query_id, {})[doc_id] = grade
        self._by_query = by_query

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._by_query.get(query_id, {}).get(doc_id, 0)

    def is_relevant(self, query_id: str, doc_id: str) -> bool:
        return self.grade(query_id, doc_id) > 0

    def judged(self, query_id: str) -> Mapping[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def relevant(self, query_id: str) -> Set[str]:
        return {
            doc_id for doc_id, grade in self.judged(query_id).items()
            if grade > 0
        }

    def num_relevant(self, query_id: str) -> int:
        return sum(1 for grade in self.judged(query_id).values() if grade > 0)

    def query_ids(self) -> List[str]:
        return sorted(self._by_query)

    def items(self) -> Iterator[Tuple[Tuple[str, str], int]]:
        for query_id in sorted(self._by_query):
            for doc_id in sorted(self._by_query[query_id]):
                yield (query_id, doc_id), self._by_query[query_id][doc_id]

    def __len__(self) -> int:
        return sum(len(docs) for docs in self._by_query.values())

    def __contains__(self, query_id: object) -> bool:
        return query_id in self._by_query


@dataclass(frozen=True)
class RankedList:
    """One query's ranking. Rank is the 1-based position in ``entries``."""
    query_id: str
    entries: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, 'entries',
            tuple((str(doc_id), float(score))
                  for doc_id, score in self.entries))

    @classmethod
    def from_scores(cls,
                    query_id: str,
                    scores: Iterable[Tuple[str, float]],
                    top_k: Optional[int] = None) -> 'RankedList':
        """Sorts by descending score, breaking ties by ascending doc id."""
        ordered = sorted(scores, key=lambda pair: (-pair[1], pair[0]))
        if top_k is not None:
            ordered = ordered[:top_k]
        return cls(query_id=query_id, entries=tuple(ordered))

    @property
    def doc_ids(self) -> List[str]:
        return [doc_id for doc_id, _ in self.entries]

    @property
    def scores(self) -> List[float]:
        return [score for _, score in self.entries]

    def rank_of(self, doc_id: str) -> Optional[int]:
        for position, (candidate, _) in enumerate(self.entries, start=1):
            if candidate == doc_id:
                return position
        return None

    def top(self, k: int) -> 'RankedList':
        return RankedList(self.query_id, self.entries[:k])

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RunSet:
    run_tag: str
    lists: Mapping[str, RankedList] = field(default_factory=dict)
    # Violations found while parsing a run file (see trec_io.parse_run).
    violations: Tuple[str, ...] = ()

    def __post_init__(self):
        for query_id, ranked in self.lists.items():
            if ranked.query_id != query_id:
                raise ValueError(
                    f'RunSet key {query_id} holds the list of query {ranked.query_id}.'
                )
        object.__setattr__(self, 'lists', dict(self.lists))

    def get(self, query_id: str) -> RankedList:
        """The list for ``query_id``; an empty list if the run has none."""
        return self.lists.get(query_id, RankedList(query_id))

    def query_ids(self) -> List[str]:
        return sorted(self.lists)

    def __len__(self) -> int:
        return len(self.lists)


@dataclass(frozen=True)
class MetricReport:
    metric_name: str
    cutoff: Optional[int]
    per_query: Mapping[str, float]
    aggregate: float
    extras: Mapping[str, float] = field(default_factory=dict)
    skipped: Tuple[str, ...] = ()
    # Resolved run configuration, written next to ``extras``.
    config: Mapping[str, Any] = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.metric_name == 'ap':
            return 'map'
        if self.cutoff is None:
            return self.metric_name
        return f'{self.metric_name}@{self.cutoff}'


def validate_ranked_list(ranked: RankedList) -> List[str]:
    """Returns every invariant violation of ``ranked``; empty means ok."""
    violations = []
    seen = set()
    previous = None
    for position, (doc_id, score) in enumerate(ranked.entries, start=1):
        if doc_id in seen:
            violations.append(f'duplicate doc id {doc_id}')
        seen.add(doc_id)
        if previous is not None and score > previous:
            violations.append(f'score inversion at rank {position}')
        previous = score
    return violations


def check_unique_ids(records: Iterable[Any], kind: str) -> None:
    seen = set()
    for record in records:
        if record.id in seen:
            raise DataFault(f'Duplicate {kind} id {record.id}.')
        seen.add(record.id)


def filter_queries(queries: Sequence[QueryRecord],
                   include_groups: Optional[Iterable[str]] = None,
                   exclude_groups: Optional[Iterable[str]] = None
                  ) -> List[QueryRecord]:
    """Slices a query set by group tag.

    ``include_groups`` keeps only the named groups; ``exclude_groups`` drops
    them, which gives the all-other-groups complement of a held-out type.
    Queries without a group only survive when no include list is given.
    """
    include = set(include_groups) if include_groups else None
    exclude = set(exclude_groups) if exclude_groups else set()
    kept = []
    for query in queries:
        if include is not None and query.group not in include:
            continue
        if query.group in exclude:
            continue
        kept.append(query)
    return kept
