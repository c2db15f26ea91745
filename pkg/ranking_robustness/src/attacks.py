# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Seeded query attacks.

Character edits touch one internal character of one word, so the first and
last characters of every word survive:

==================  ===========================================  ===========
kind                edit                                         word length
==================  ===========================================  ===========
``char_add``        insert a letter at an internal boundary      >= 2
``char_remove``     delete an internal character                 >= 3
``char_substitute`` replace an internal character by another     >= 3
                    letter
``char_swap``       exchange two different adjacent internal     >= 4
                    characters
==================  ===========================================  ===========

Word edits insert a vocabulary word (``word_add``), drop a word
(``word_remove``, never the last one) or replace a word by a different
vocabulary word (``word_substitute``).

Every query gets its own random stream derived from the master seed and its
id, so a manifest does not depend on query order or on the worker count.
Each edit is recorded in full and :func:`replay_edits` re-applies a
manifest entry to its original text.
"""

import hashlib
import string
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.index import InvertedIndex
from src.parallel import map_ordered, worker_state
from src.records import QueryRecord, check_unique_ids
from src.text import word_split

__all__ = [
    'CHAR_KINDS', 'WORD_KINDS', 'ATTACK_MODES', 'EditRecord',
    'AttackManifestEntry', 'AttackManifest', 'UnattackableQuery',
    'query_seed', 'query_rng', 'char_attack', 'n_char_attack', 'word_attack',
    'apply_edit', 'replay_edits', 'build_vocabulary', 'attack_query',
    'attack_query_set', 'attacked_queries'
]

CHAR_KINDS = ('char_add', 'char_remove', 'char_substitute', 'char_swap')
WORD_KINDS = ('word_add', 'word_remove', 'word_substitute')
ATTACK_MODES = {'char1': 1, 'char2': 2, 'word': None}
LETTERS = string.ascii_lowercase
DEFAULT_VOCAB_SIZE = 10000
SWAP_RETRIES = 10


@dataclass(frozen=True)
class EditRecord:
    kind: str
    word_index: int
    # Position inside the word; only set for character edits.
    char_index: Optional[int] = None
    inserted: Optional[str] = None
    removed: Optional[str] = None

    def __post_init__(self):
        if self.kind not in CHAR_KINDS + WORD_KINDS:
            raise ValueError(f'Unknown edit kind {self.kind!r}.')
        if self.word_index < 0:
            raise ValueError(f'word_index must be >= 0, got {self.word_index}.')
        if self.is_char_edit and self.char_index is None:
            raise ValueError(f'{self.kind} edits need a char_index.')
        if not self.is_char_edit and self.char_index is not None:
            raise ValueError(f'{self.kind} edits take no char_index.')

    @property
    def is_char_edit(self) -> bool:
        return self.kind in CHAR_KINDS


@dataclass(frozen=True)
class AttackManifestEntry:
    query_id: str
    original: str
    attacked: str
    edits: Tuple[EditRecord, ...] = ()
    seed: int = 0

    @property
    def skipped(self) -> bool:
        return not self.edits


@dataclass(frozen=True)
class AttackManifest:
    """All entries in input order. Skipped queries keep their text."""
    entries: Tuple[AttackManifestEntry, ...] = ()
    skipped: Tuple[str, ...] = ()

    def __iter__(self) -> Iterator[AttackManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


class UnattackableQuery(ValueError):

    def __init__(self, text: str, stage: Optional[int] = None):
        self.stage = stage
        where = f' at stage {stage}' if stage is not None else ''
        super().__init__(f'query unattackable{where}: {text!r}')


def query_seed(seed: int, query_id: str) -> int:
    """Unsigned 64-bit stream seed for one query."""
    digest = hashlib.sha256(f'{seed}:{query_id}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


def query_rng(seed: int, query_id: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(query_seed(seed, query_id)))


def _choice(rng: np.random.Generator, options: Sequence):
    return options[int(rng.integers(len(options)))]


def _random_letter(rng: np.random.Generator, exclude: str = '') -> str:
    return _choice(rng, [c for c in LETTERS if c != exclude])


def _swap_positions(word: str) -> List[int]:
    return [p for p in range(1, len(word) - 2) if word[p] != word[p + 1]]


def _char_eligible(word: str, kind: str) -> bool:
    if kind == 'char_add':
        return len(word) >= 2
    if kind in ('char_remove', 'char_substitute'):
        return len(word) >= 3
    return len(word) >= 4 and bool(_swap_positions(word))


def _draw_char_edit(word: str, word_index: int, kind: str,
                    rng: np.random.Generator) -> EditRecord:
    if kind == 'char_add':
        position = int(rng.integers(1, len(word)))
        return EditRecord(kind, word_index, position, inserted=_random_letter(rng))
    if kind == 'char_remove':
        position = int(rng.integers(1, len(word) - 1))
        return EditRecord(kind, word_index, position, removed=word[position])
    if kind == 'char_substitute':
        position = int(rng.integers(1, len(word) - 1))
        return EditRecord(kind,
                          word_index,
                          position,
                          inserted=_random_letter(rng, exclude=word[position]),
                          removed=word[position])

    position = None
    for _ in range(SWAP_RETRIES):
        candidate = int(rng.integers(1, len(word) - 2))
        if word[candidate] != word[candidate + 1]:
            position = candidate
            break
    if position is None:
        position = _choice(rng, _swap_positions(word))
    pair = word[position:position + 2]
    return EditRecord(kind,
                      word_index,
                      position,
                      inserted=pair[::-1],
                      removed=pair)


def char_attack(text: str,
                rng: np.random.Generator,
                kind: Optional[str] = None) -> Tuple[str, EditRecord]:
    """Applies one character edit to one word of ``text``.

    The kind is drawn uniformly (unless forced), then the word among the
    words eligible for that kind, then the position. A drawn kind with no
    eligible word is redrawn among the kinds that have one.

    Raises:
        UnattackableQuery: No word is eligible for any kind (or for the
            forced kind).
    """
    words = [w.text for w in word_split(text)]
    if kind is not None and kind not in CHAR_KINDS:
        raise ValueError(f'Unknown character edit kind {kind!r}.')

    drawn = kind if kind is not None else _choice(rng, CHAR_KINDS)
    eligible = [i for i, w in enumerate(words) if _char_eligible(w, drawn)]
    if not eligible:
        if kind is not None:
            raise UnattackableQuery(text)
        kinds = [
            k for k in CHAR_KINDS
            if any(_char_eligible(w, k) for w in words)
        ]
        if not kinds:
            raise UnattackableQuery(text)
        drawn = _choice(rng, kinds)
        eligible = [i for i, w in enumerate(words) if _char_eligible(w, drawn)]

    word_index = _choice(rng, eligible)
    edit = _draw_char_edit(words[word_index], word_index, drawn, rng)
    return apply_edit(text, edit), edit


def n_char_attack(text: str, n: int,
                  rng: np.random.Generator) -> Tuple[str, Tuple[EditRecord, ...]]:
    """``n`` stacked character attacks, each on the previous output."""
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}.')
    edits = []
    for stage in range(n):
        try:
            text, edit = char_attack(text, rng)
        except UnattackableQuery as e:
            raise UnattackableQuery(text, stage=stage) from e
        edits.append(edit)
    return text, tuple(edits)


def word_attack(text: str,
                vocabulary: Sequence[str],
                rng: np.random.Generator,
                kind: Optional[str] = None) -> Tuple[str, EditRecord]:
    """Adds, removes or substitutes one whole word of ``text``."""
    if kind is not None and kind not in WORD_KINDS:
        raise ValueError(f'Unknown word edit kind {kind!r}.')
    words = text.split()
    if not words:
        raise UnattackableQuery(text)
    substitutable = [
        i for i, w in enumerate(words) if any(v != w for v in vocabulary)
    ]
    eligible = {
        'word_add': bool(vocabulary),
        'word_remove': len(words) >= 2,
        'word_substitute': bool(substitutable),
    }

    drawn = kind if kind is not None else _choice(rng, WORD_KINDS)
    if not eligible[drawn]:
        if kind is not None:
            raise UnattackableQuery(text)
        kinds = [k for k in WORD_KINDS if eligible[k]]
        if not kinds:
            raise UnattackableQuery(text)
        drawn = _choice(rng, kinds)

    if drawn == 'word_add':
        position = int(rng.integers(len(words) + 1))
        edit = EditRecord(drawn, position, inserted=_choice(rng, vocabulary))
    elif drawn == 'word_remove':
        position = int(rng.integers(len(words)))
        edit = EditRecord(drawn, position, removed=words[position])
    else:
        position = _choice(rng, substitutable)
        replacement = _choice(rng,
                              [v for v in vocabulary if v != words[position]])
        edit = EditRecord(drawn,
                          position,
                          inserted=replacement,
                          removed=words[position])
    return apply_edit(text, edit), edit


def _apply_char_edit(word: str, edit: EditRecord) -> str:
    p = edit.char_index
    assert p is not None
    if edit.kind == 'char_add':
        if not 1 <= p <= len(word) - 1:
            raise ValueError(f'Insertion point {p} is not internal to {word!r}.')
        return word[:p] + (edit.inserted or '') + word[p:]
    width = 2 if edit.kind == 'char_swap' else 1
    if not 1 <= p <= len(word) - 1 - width:
        raise ValueError(f'Position {p} is not internal to {word!r}.')
    if word[p:p + width] != edit.removed:
        raise ValueError(f'{edit.kind} expected {edit.removed!r} at {p} of '
                         f'{word!r}, found {word[p:p + width]!r}.')
    return word[:p] + (edit.inserted or '') + word[p + width:]


def apply_edit(text: str, edit: EditRecord) -> str:
    """Re-applies one recorded edit to ``text``.

    Character edits are spliced in place and keep the surrounding
    whitespace; word edits rejoin the words with single spaces.
    """
    if edit.is_char_edit:
        words = word_split(text)
        if edit.word_index >= len(words):
            raise ValueError(f'No word {edit.word_index} in {text!r}.')
        target = words[edit.word_index]
        return (text[:target.start] + _apply_char_edit(target.text, edit) +
                text[target.end:])

    words = text.split()
    if edit.kind == 'word_add':
        if edit.word_index > len(words) or not edit.inserted:
            raise ValueError(f'Cannot insert at word {edit.word_index} of '
                             f'{text!r}.')
        words.insert(edit.word_index, edit.inserted)
    else:
        if edit.word_index >= len(words):
            raise ValueError(f'No word {edit.word_index} in {text!r}.')
        if words[edit.word_index] != edit.removed:
            raise ValueError(f'{edit.kind} expected {edit.removed!r} at word '
                             f'{edit.word_index} of {text!r}.')
        if edit.kind == 'word_remove':
            del words[edit.word_index]
        else:
            words[edit.word_index] = edit.inserted or ''
    return ' '.join(words)


def replay_edits(text: str, edits: Sequence[EditRecord]) -> str:
    for edit in edits:
        text = apply_edit(text, edit)
    return text


def build_vocabulary(index: InvertedIndex,
                     size: int = DEFAULT_VOCAB_SIZE) -> List[str]:
    """The ``size`` most frequent collection terms, ties by term."""
    if size < 1:
        raise ValueError(f'Vocabulary size must be >= 1, got {size}.')
    terms = sorted(index.terms(), key=lambda t: (-index.ctf(t), t))
    return terms[:size]


def attack_query(query: QueryRecord,
                 mode: str,
                 seed: int,
                 vocabulary: Sequence[str] = ()) -> AttackManifestEntry:
    """Attacks one query with its own derived random stream.

    An unattackable query comes back unchanged with no edits.
    """
    stream_seed = query_seed(seed, query.id)
    rng = np.random.Generator(np.random.PCG64(stream_seed))
    try:
        if mode == 'word':
            attacked, edit = word_attack(query.text, vocabulary, rng)
            edits: Tuple[EditRecord, ...] = (edit,)
        else:
            attacked, edits = n_char_attack(query.text, ATTACK_MODES[mode], rng)
    except UnattackableQuery:
        return AttackManifestEntry(query.id, query.text, query.text, (),
                                   stream_seed)
    return AttackManifestEntry(query.id, query.text, attacked, edits,
                               stream_seed)


def _attack_worker(query: QueryRecord) -> AttackManifestEntry:
    state = worker_state()
    return attack_query(query, state['mode'], state['seed'],
                        state['vocabulary'])


def attack_query_set(queries: Sequence[QueryRecord],
                     mode: str,
                     seed: int,
                     vocabulary: Sequence[str] = (),
                     threads: int = 1,
                     progress_bar: bool = False) -> AttackManifest:
    """Attacks every query and returns the manifest in input order.

    Args:
        queries (Sequence[QueryRecord]): Queries with unique ids.
        mode (str): ``char1``, ``char2`` or ``word``.
        seed (int): Master seed (unsigned 64-bit).
        vocabulary (Sequence[str]): Word pool for word attacks.
        threads (int): Worker count.
        progress_bar (bool): Show a tqdm bar.
    """
    if mode not in ATTACK_MODES:
        raise ValueError(
            f"Not sure how to build attack with mode='{mode}'. Options are "
            f'{list(ATTACK_MODES)}.')
    if not 0 <= seed < 2**64:
        raise ValueError(f'Seed must be an unsigned 64-bit integer, got {seed}.')
    check_unique_ids(queries, 'query')
    entries = map_ordered(_attack_worker,
                          list(queries),
                          state={
                              'mode': mode,
                              'seed': seed,
                              'vocabulary': list(vocabulary),
                          },
                          threads=threads,
                          progress_bar=progress_bar)
    skipped = tuple(entry.query_id for entry in entries if entry.skipped)
    return AttackManifest(tuple(entries), skipped)


def attacked_queries(manifest: AttackManifest,
                     queries: Sequence[QueryRecord]) -> List[QueryRecord]:
    """The attacked query set; group tags are carried over."""
    groups = {query.id: query.group for query in queries}
    return [
        QueryRecord(entry.query_id, entry.attacked, groups.get(entry.query_id))
        for entry in manifest
    ]
