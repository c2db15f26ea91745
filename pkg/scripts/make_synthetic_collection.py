# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Synthetic test collection: corpus, typed queries and graded qrels."""
import os
import string
from argparse import ArgumentParser, Namespace
from typing import List, Tuple

import numpy as np
from tqdm import tqdm

QUERY_TYPES = ('what', 'how', 'who', 'where')


def parse_args() -> Namespace:
    """Parse commandline arguments."""
    args = ArgumentParser()
    args.add_argument('--out_root', type=str, required=True)
    args.add_argument('--num_docs', type=int, default=100)
    args.add_argument('--num_queries', type=int, default=20)
    args.add_argument('--vocab_size', type=int, default=400)
    args.add_argument('--seed', type=int, default=42)

    return args.parse_args()


def build_vocabulary(rng: np.random.Generator, size: int) -> List[str]:
    """Distinct pronounceable-looking lowercase words of 3 to 9 letters."""
    letters = np.array(list(string.ascii_lowercase))
    words = []
    seen = set(QUERY_TYPES)
    while len(words) < size:
        word = ''.join(rng.choice(letters, size=int(rng.integers(3, 10))))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def build_collection(
    num_docs: int, num_queries: int, vocab_size: int, seed: int
) -> Tuple[List[Tuple[str, str]], List[Tuple[str, str, str]], List[Tuple[
        str, str, int]]]:
    """Generates (corpus, queries, qrels) rows.

    Background text follows a Zipf-like term distribution. Every query gets
    one to four relevant documents into which its topic terms are planted,
    plus a couple of judged non-relevant ones.
    """
    if num_docs < 5 or num_queries < 1:
        raise ValueError('Need >= 5 documents and >= 1 query.')
    rng = np.random.default_rng(seed)
    vocab = build_vocabulary(rng, vocab_size)
    weights = 1.0 / np.arange(1, vocab_size + 1)
    weights /= weights.sum()

    docs = [
        list(rng.choice(vocab, size=int(rng.integers(20, 60)), p=weights))
        for _ in range(num_docs)
    ]
    queries = []
    qrels = []
    for q in range(num_queries):
        query_id = f'q{q + 1}'
        group = QUERY_TYPES[q % len(QUERY_TYPES)]
        # Topic terms come from the rarer half of the vocabulary.
        topic = list(
            rng.choice(vocab[vocab_size // 2:],
                       size=int(rng.integers(2, 5)),
                       replace=False))
        queries.append((query_id, ' '.join([group] + topic), group))

        judged = rng.choice(num_docs,
                            size=int(rng.integers(1, 5)) + 2,
                            replace=False)
        relevant, non_relevant = judged[:-2], judged[-2:]
        for doc in relevant:
            grade = int(rng.integers(1, 3))
            planted = rng.choice(topic, size=2 * grade + 1)
            for term in planted:
                docs[doc].insert(int(rng.integers(len(docs[doc]) + 1)), term)
            qrels.append((query_id, f'd{doc + 1}', grade))
        for doc in non_relevant:
            qrels.append((query_id, f'd{doc + 1}', 0))

    corpus = [(f'd{i + 1}', ' '.join(tokens)) for i, tokens in enumerate(docs)]
    return corpus, queries, qrels


def main(args: Namespace) -> None:
    """Main: write corpus.tsv, queries.tsv and qrels.txt under out_root.

    Args:
        args (Namespace): Commandline arguments.
    """
    corpus, queries, qrels = build_collection(args.num_docs, args.num_queries,
                                              args.vocab_size, args.seed)
    os.makedirs(args.out_root, exist_ok=True)
    with open(os.path.join(args.out_root, 'corpus.tsv'),
              'w',
              encoding='utf-8',
              newline='\n') as out:
        for doc_id, text in tqdm(corpus, desc='corpus'):
            out.write(f'{doc_id}\t{text}\n')
    with open(os.path.join(args.out_root, 'queries.tsv'),
              'w',
              encoding='utf-8',
              newline='\n') as out:
        for query_id, text, group in queries:
            out.write(f'{query_id}\t{text}\t{group}\n')
    with open(os.path.join(args.out_root, 'qrels.txt'),
              'w',
              encoding='utf-8',
              newline='\n') as out:
        for query_id, doc_id, grade in qrels:
            out.write(f'{query_id} 0 {doc_id} {grade}\n')


if __name__ == '__main__':
    main(parse_args())
