# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""In-memory inverted index with the collection statistics BM25 and QL need.

The index is written once by :func:`build_index` and only read afterwards,
so a single instance can be handed to every search worker.
"""

import json
import warnings
from collections import Counter
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.records import DataFault, DocRecord
from src.text import TokenizerConfig, tokenize

__all__ = ['InvertedIndex', 'CandidateMatrix', 'build_index', 'load_index']


class CandidateMatrix:
    """Term frequencies of a fixed set of query terms over candidate docs.

    Built once per query and reused across ranker configurations, which is
    what keeps grid tuning cheap.

    Args:
        doc_ids (List[str]): Candidate documents, in corpus order.
        terms (List[str]): Distinct query terms, in first-occurrence order.
        query_tf (np.ndarray): Occurrences of each term in the query.
        tf (np.ndarray): ``[len(doc_ids), len(terms)]`` term frequencies.
        doc_length (np.ndarray): Token count of each candidate.
        doc_freq (np.ndarray): Document frequency of each term.
        collection_tf (np.ndarray): Collection frequency of each term.
    """

    def __init__(self, doc_ids: List[str], terms: List[str],
                 query_tf: np.ndarray, tf: np.ndarray, doc_length: np.ndarray,
                 doc_freq: np.ndarray, collection_tf: np.ndarray):
        self.doc_ids = doc_ids
        self.terms = terms
        self.query_tf = query_tf
        self.tf = tf
        self.doc_length = doc_length
        self.doc_freq = doc_freq
        self.collection_tf = collection_tf

    def __len__(self) -> int:
        return len(self.doc_ids)


class InvertedIndex:
    """Term -> postings mapping plus collection statistics.

    Args:
        term_doc_tf (Dict[str, Dict[str, int]]): Per term, the frequency in
            each document that contains it (corpus order).
        doc_length (Dict[str, int]): Token count per document (corpus order).
        tokenizer_config (TokenizerConfig): The preprocessing used to build
            the index; queries must be tokenized the same way.
        build_warnings (Sequence[str]): Non-fatal findings of the build.
    """

    def __init__(self,
                 term_doc_tf: Dict[str, Dict[str, int]],
                 doc_length: Dict[str, int],
                 tokenizer_config: TokenizerConfig,
                 build_warnings: Sequence[str] = ()):
        if not doc_length:
            raise DataFault('Cannot build an index over an empty corpus.')
        self._term_doc_tf = term_doc_tf
        self.doc_length = doc_length
        self.tokenizer_config = tokenizer_config
        self.build_warnings = tuple(build_warnings)
        self.doc_count = len(doc_length)
        self.collection_length = sum(doc_length.values())
        self.collection_term_freq = {
            term: sum(docs.values()) for term, docs in term_doc_tf.items()
        }
        # An all-empty collection has no length to normalize by.
        self.avgdl = (self.collection_length / self.doc_count
                      if self.collection_length > 0 else 1.0)
        self._doc_position = {
            doc_id: position for position, doc_id in enumerate(doc_length)
        }

    @property
    def postings(self) -> Dict[str, Tuple[Tuple[str, int], ...]]:
        return {
            term: tuple(docs.items())
            for term, docs in self._term_doc_tf.items()
        }

    @property
    def doc_ids(self) -> List[str]:
        return list(self.doc_length)

    def terms(self) -> List[str]:
        return sorted(self._term_doc_tf)

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self.doc_length

    def require_doc(self, doc_id: str) -> None:
        if doc_id not in self.doc_length:
            raise KeyError(f'Unknown doc id {doc_id}.')

    def tf(self, term: str, doc_id: str) -> int:
        return self._term_doc_tf.get(term, {}).get(doc_id, 0)

    def df(self, term: str) -> int:
        return len(self._term_doc_tf.get(term, {}))

    def ctf(self, term: str) -> int:
        return self.collection_term_freq.get(term, 0)

    def candidate_matrix(self,
                         query_terms: Sequence[str],
                         doc_ids: Optional[Iterable[str]] = None
                        ) -> CandidateMatrix:
        """Gathers the statistics needed to score ``query_terms``.

        With ``doc_ids`` omitted the candidates are the union of the
        postings of the query terms.
        """
        query_tf = Counter(query_terms)
        terms = list(dict.fromkeys(query_terms))
        if doc_ids is None:
            candidates = set()
            for term in terms:
                candidates.update(self._term_doc_tf.get(term, {}))
        else:
            candidates = set(doc_ids)
            for doc_id in candidates:
                self.require_doc(doc_id)
        ordered = sorted(candidates, key=self._doc_position.__getitem__)
        row_of = {doc_id: row for row, doc_id in enumerate(ordered)}
        tf = np.zeros((len(ordered), len(terms)), dtype=np.float64)
        for column, term in enumerate(terms):
            for doc_id, count in self._term_doc_tf.get(term, {}).items():
                row = row_of.get(doc_id)
                if row is not None:
                    tf[row, column] = count
        return CandidateMatrix(
            doc_ids=ordered,
            terms=terms,
            query_tf=np.array([query_tf[term] for term in terms],
                              dtype=np.float64),
            tf=tf,
            doc_length=np.array([self.doc_length[d] for d in ordered],
                                dtype=np.float64),
            doc_freq=np.array([self.df(term) for term in terms],
                              dtype=np.float64),
            collection_tf=np.array([self.ctf(term) for term in terms],
                                   dtype=np.float64),
        )

    def check_invariants(self) -> List[str]:
        violations = []
        if sum(self.doc_length.values()) != self.collection_length:
            violations.append('doc lengths do not sum to collection length')
        for term, docs in self._term_doc_tf.items():
            if sum(docs.values()) != self.collection_term_freq.get(term):
                violations.append(
                    f'postings of {term!r} do not sum to its collection frequency'
                )
            if len(docs) > self.doc_count:
                violations.append(f'df({term!r}) exceeds the document count')
            unknown = [d for d in docs if d not in self.doc_length]
            if unknown:
                violations.append(
                    f'postings of {term!r} reference unknown docs {unknown}')
        return violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tokenizer_config': self.tokenizer_config.to_dict(),
            'doc_count': self.doc_count,
            'collection_length': self.collection_length,
            'doc_length': [[doc_id, length]
                           for doc_id, length in self.doc_length.items()],
            'postings': {
                term: [[doc_id, count]
                       for doc_id, count in self._term_doc_tf[term].items()]
                for term in sorted(self._term_doc_tf)
            },
            'build_warnings': list(self.build_warnings),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'InvertedIndex':
        try:
            index = cls(
                term_doc_tf={
                    term: {doc_id: int(count) for doc_id, count in postings
                          } for term, postings in payload['postings'].items()
                },
                doc_length={
                    doc_id: int(length)
                    for doc_id, length in payload['doc_length']
                },
                tokenizer_config=TokenizerConfig.from_dict(
                    payload['tokenizer_config']),
                build_warnings=payload.get('build_warnings', ()),
            )
        except (KeyError, TypeError) as e:
            raise DataFault(f'Malformed index payload: {e!r}') from e
        if index.doc_count != payload.get('doc_count', index.doc_count):
            raise DataFault('Index doc_count does not match its documents.')
        if index.collection_length != payload.get('collection_length',
                                                  index.collection_length):
            raise DataFault(
                'Index collection_length does not match its documents.')
        violations = index.check_invariants()
        if violations:
            raise DataFault(f'Index fails its invariants: {violations}')
        return index

    def save(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write('\n')


def build_index(corpus: Sequence[DocRecord],
                config: TokenizerConfig,
                progress_bar: bool = False) -> InvertedIndex:
    if len(corpus) == 0:
        raise DataFault('Cannot build an index over an empty corpus.')

    term_doc_tf: Dict[str, Dict[str, int]] = {}
    doc_length: Dict[str, int] = {}
    build_warnings = []
    for doc in tqdm(corpus, disable=not progress_bar, desc='indexing'):
        if doc.id in doc_length:
            raise DataFault(f'Duplicate doc id {doc.id}.')
        tokens = tokenize(doc.text, config)
        doc_length[doc.id] = len(tokens)
        if not tokens:
            message = f'Document {doc.id} has no tokens after preprocessing.'
            warnings.warn(message)
            build_warnings.append(message)
        for term, count in Counter(tokens).items():
            term_doc_tf.setdefault(term, {})[doc.id] = count

    return InvertedIndex(term_doc_tf=term_doc_tf,
                         doc_length=doc_length,
                         tokenizer_config=config,
                         build_warnings=build_warnings)


def load_index(path: str) -> InvertedIndex:
    with open(path, encoding='utf-8') as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFault(f'Index is not valid JSON: {e.msg}',
                            source=path,
                            line=e.lineno) from e
    return InvertedIndex.from_dict(payload)
