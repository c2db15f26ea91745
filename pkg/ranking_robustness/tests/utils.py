# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

import pathlib
import shutil
import sys
import tempfile
from argparse import Namespace
from typing import Iterable, Mapping, Sequence, Tuple

from src.index import build_index
from src.records import DocRecord, Qrels, RankedList, RunSet
from src.text import TokenizerConfig

sys.path.append(str(pathlib.Path(__file__).parent.parent.parent / 'scripts'))
from make_synthetic_collection import main as make_synthetic_collection


class SynthCollectionDirectory:
    """Context manager that writes a synthetic collection to a temp dir.

    The directory holds ``corpus.tsv``, ``queries.tsv`` and ``qrels.txt``
    and is removed on exit.
    """

    def __init__(self,
                 num_docs: int = 100,
                 num_queries: int = 20,
                 vocab_size: int = 400,
                 seed: int = 42):
        self.args = Namespace(num_docs=num_docs,
                              num_queries=num_queries,
                              vocab_size=vocab_size,
                              seed=seed)
        self.root = ''

    def __enter__(self) -> str:
        self.root = tempfile.mkdtemp()
        write_synth_collection(self.root, **vars(self.args))
        return self.root

    def __exit__(self, exc_type, exc_val, exc_tb):
        shutil.rmtree(self.root, ignore_errors=True)


def make_index(texts: Sequence[str],
               config: TokenizerConfig = TokenizerConfig()):
    corpus = [DocRecord(f'd{i + 1}', text) for i, text in enumerate(texts)]
    return build_index(corpus, config)


def make_run(lists: Mapping[str, Sequence[str]], tag: str = 'test') -> RunSet:
    """Run whose scores decrease with rank."""
    return RunSet(
        tag, {
            query_id: RankedList(
                query_id,
                tuple((doc_id, float(len(docs) - position))
                      for position, doc_id in enumerate(docs)))
            for query_id, docs in lists.items()
        })


def make_qrels(judgments: Iterable[Tuple[str, str, int]]) -> Qrels:
    return Qrels({(query_id, doc_id): grade
                  for query_id, doc_id, grade in judgments})


def read_text(path: str) -> str:
    with open(path, encoding='utf-8') as f:
        return f.read()


def write_synth_collection(root: str,
                           num_docs: int = 100,
                           num_queries: int = 20,
                           vocab_size: int = 400,
                           seed: int = 42) -> None:
    make_synthetic_collection(
        Namespace(out_root=root,
                  num_docs=num_docs,
                  num_queries=num_queries,
                  vocab_size=vocab_size,
                  seed=seed))
