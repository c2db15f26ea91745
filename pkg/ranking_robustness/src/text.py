# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Query and document preprocessing.

Documents and queries go through the same :func:`tokenize` call with the
same :class:`TokenizerConfig`: whitespace split, optional lowercasing,
optional trimming of leading/trailing punctuation, and an optional stemmer.

The shipped ``simple_suffix`` stemmer applies the first matching rule of
``SUFFIX_RULES`` to each token, and only when the remaining stem keeps at
least ``MIN_STEM_LENGTH`` characters:

    ======  ===========  =============================================
    suffix  replacement  extra condition
    ======  ===========  =============================================
    sses    ss
    ies     y
    ing     (none)       then undouble a final consonant pair
    ed      (none)       then undouble a final consonant pair
    ly      (none)
    s       (none)       not after ``s``, ``u`` or ``i`` (ss, us, is)
    ======  ===========  =============================================

Undoubling drops the last letter of a doubled final consonant other than
``l``, ``s`` or ``z`` ("running" -> "runn" -> "run").
"""

import re
import unicodedata
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, NamedTuple

__all__ = [
    'STEMMERS', 'TokenizerConfig', 'Word', 'tokenize', 'word_split',
    'simple_suffix_stem'
]

STEMMERS = ('none', 'simple_suffix')

SUFFIX_RULES = (
    ('sses', 'ss'),
    ('ies', 'y'),
    ('ing', ''),
    ('ed', ''),
    ('ly', ''),
    ('s', ''),
)
MIN_STEM_LENGTH = 3
_UNDOUBLE_AFTER = ('ing', 'ed')
_KEEP_DOUBLED = set('lsz')
_VOWELS = set('aeiou')

_WORD_PATTERN = re.compile(r'\S+')


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    stemmer: str = 'none'
    strip_punctuation: bool = True

    def __post_init__(self):
        if self.stemmer not in STEMMERS:
            raise ValueError(
                f"stemmer='{self.stemmer}' must be one of {list(STEMMERS)}.")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'TokenizerConfig':
        return cls(lowercase=bool(values.get('lowercase', True)),
                   stemmer=str(values.get('stemmer', 'none')),
                   strip_punctuation=bool(
                       values.get('strip_punctuation', True)))


class Word(NamedTuple):
    text: str
    start: int
    end: int


def _is_punctuation(char: str) -> bool:
    return unicodedata.category(char).startswith('P')


def _strip_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punctuation(token[start]):
        start += 1
    while end > start and _is_punctuation(token[end - 1]):
        end -= 1
    return token[start:end]


def simple_suffix_stem(token: str) -> str:
    for suffix, replacement in SUFFIX_RULES:
        if not token.endswith(suffix):
            continue
        stem = token[:len(token) - len(suffix)] + replacement
        if len(stem) < MIN_STEM_LENGTH:
            return token
        if suffix == 's' and token[-2] in ('s', 'u', 'i'):
            return token
        if (suffix in _UNDOUBLE_AFTER and len(stem) > MIN_STEM_LENGTH and
                stem[-1] == stem[-2] and stem[-1] not in _KEEP_DOUBLED and
                stem[-1] not in _VOWELS and stem[-1].isalpha()):
            stem = stem[:-1]
        return stem
    return token


def tokenize(text: str, config: TokenizerConfig) -> List[str]:
    tokens = []
    for token in text.split():
        if config.lowercase:
            token = token.lower()
        if config.strip_punctuation:
            token = _strip_punctuation(token)
        if not token:
            continue
        if config.stemmer == 'simple_suffix':
            token = simple_suffix_stem(token)
        tokens.append(token)
    return tokens


def word_split(text: str) -> List[Word]:
    """Raw whitespace-delimited words with their ``[start, end)`` offsets.

    Casing and punctuation are kept; the attack module edits these words
    directly.
    """
    return [
        Word(match.group(), match.start(), match.end())
        for match in _WORD_PATTERN.finditer(text)
    ]
