# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Readers and writers for every on-disk artifact.

================  ==============================================================
artifact          line format
================  ==============================================================
run               ``qid Q0 docid rank score runtag``
qrels             ``qid 0 docid grade``
corpus            ``docid<TAB>text`` or JSON lines ``{"id": ..., "contents": ...}``
queries           ``qid<TAB>text[<TAB>group]``
attack manifest   ``qid original attacked kind word_index char_index inserted
                  removed seed`` (tab separated, one row per edit)
metric report     JSON ``{metric, cutoff, per_query, aggregate, extras, skipped,
                  config}``
================  ==============================================================

Parsers take a text stream and a ``source`` label used in error messages;
the ``read_*`` helpers open a path. Every rejected line raises
:class:`~src.records.DataFault` with its 1-based line number. Writers are
deterministic: queries, keys and rows are sorted.
"""

import json
import warnings
from typing import (IO, Any, Dict, Iterator, List, Mapping, Optional, Sequence,
                    Tuple)

from src.attacks import AttackManifest, AttackManifestEntry, EditRecord
from src.records import (DataFault, DocRecord, MetricReport, Qrels,
                         QueryRecord, RankedList, RunSet, check_unique_ids,
                         validate_ranked_list)

__all__ = [
    'CORPUS_FORMATS', 'parse_run', 'write_run', 'parse_qrels', 'write_qrels',
    'parse_corpus', 'parse_queries', 'write_queries', 'write_report',
    'write_reports', 'parse_report', 'parse_reports', 'write_manifest',
    'parse_manifest', 'write_json', 'read_run', 'read_qrels', 'read_corpus',
    'read_queries', 'read_reports', 'read_manifest'
]

CORPUS_FORMATS = ('tsv', 'jsonl')
MANIFEST_COLUMNS = ('qid', 'original', 'attacked', 'edit_kind', 'word_index',
                    'char_index', 'inserted', 'removed', 'seed')
_SKIPPED_KIND = 'none'


def _lines(stream: IO[str]) -> Iterator[Tuple[int, str]]:
    """Non-blank lines with their 1-based number, newline stripped."""
    for number, line in enumerate(stream, start=1):
        line = line.rstrip('\r\n')
        if line.strip():
            yield number, line


def _parse_int(value: str, what: str, source: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataFault(f'{what} must be an integer, got {value!r}.', source,
                        line) from None


def _parse_float(value: str, what: str, source: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataFault(f'{what} must be a number, got {value!r}.', source,
                        line) from None


def parse_run(stream: IO[str], source: str = '<run>') -> RunSet:
    """Reads a TREC run, ordering each list by its rank column.

    Rank gaps, duplicate documents, score inversions and mixed run tags are
    reported as warnings and kept in ``RunSet.violations``.
    """
    rows: Dict[str, List[Tuple[int, str, float]]] = {}
    tags: List[str] = []
    for number, line in _lines(stream):
        columns = line.split()
        if len(columns) != 6:
            raise DataFault(f'Expected 6 columns, got {len(columns)}.', source,
                            number)
        query_id, _, doc_id, rank, score, tag = columns
        rows.setdefault(query_id, []).append(
            (_parse_int(rank, 'Rank', source, number), doc_id,
             _parse_float(score, 'Score', source, number)))
        if tag not in tags:
            tags.append(tag)

    violations = []
    if len(tags) > 1:
        violations.append(f'multiple run tags {tags}')
    lists = {}
    for query_id in sorted(rows):
        ordered = sorted(rows[query_id], key=lambda row: row[0])
        ranks = [rank for rank, _, _ in ordered]
        if ranks != list(range(1, len(ranks) + 1)):
            violations.append(f'query {query_id}: rank gaps')
        ranked = RankedList(query_id,
                            tuple((doc_id, score) for _, doc_id, score in ordered))
        violations.extend(
            f'query {query_id}: {problem}'
            for problem in validate_ranked_list(ranked))
        lists[query_id] = ranked
    for violation in violations:
        warnings.warn(f'{source}: {violation}')
    return RunSet(run_tag=tags[0] if tags else '',
                  lists=lists,
                  violations=tuple(violations))


def write_run(run: RunSet, stream: IO[str]) -> None:
    for query_id in run.query_ids():
        for rank, (doc_id, score) in enumerate(run.get(query_id).entries,
                                               start=1):
            stream.write(
                f'{query_id} Q0 {doc_id} {rank} {score:.6g} {run.run_tag}\n')


def parse_qrels(stream: IO[str], source: str = '<qrels>') -> Qrels:
    judgments: Dict[Tuple[str, str], int] = {}
    for number, line in _lines(stream):
        columns = line.split()
        if len(columns) != 4:
            raise DataFault(f'Expected 4 columns, got {len(columns)}.', source,
                            number)
        query_id, _, doc_id, grade = columns
        value = _parse_int(grade, 'Grade', source, number)
        if value < 0:
            raise DataFault(f'Grade must be >= 0, got {value}.', source, number)
        if (query_id, doc_id) in judgments:
            raise DataFault(f'Duplicate judgment ({query_id}, {doc_id}).',
                            source, number)
        judgments[(query_id, doc_id)] = value
    return Qrels(judgments)


def write_qrels(qrels: Qrels, stream: IO[str]) -> None:
    for (query_id, doc_id), grade in qrels.items():
        stream.write(f'{query_id} 0 {doc_id} {grade}\n')


def parse_corpus(stream: IO[str],
                 fmt: str = 'tsv',
                 source: str = '<corpus>') -> List[DocRecord]:
    if fmt not in CORPUS_FORMATS:
        raise ValueError(
            f"Not sure how to read corpus with format='{fmt}'. Options are "
            f'{list(CORPUS_FORMATS)}.')
    docs = []
    seen = set()
    for number, line in _lines(stream):
        if fmt == 'tsv':
            if '\t' not in line:
                raise DataFault('Expected docid<TAB>text.', source, number)
            doc_id, text = line.split('\t', 1)
        else:
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFault(f'Invalid JSON: {e.msg}', source,
                                number) from e
            if not isinstance(payload, dict) or 'id' not in payload or (
                    'contents' not in payload):
                raise DataFault('Expected an object with id and contents.',
                                source, number)
            doc_id, text = str(payload['id']), str(payload['contents'])
        if not doc_id:
            raise DataFault('Empty doc id.', source, number)
        if doc_id in seen:
            raise DataFault(f'Duplicate doc id {doc_id}.', source, number)
        seen.add(doc_id)
        docs.append(DocRecord(doc_id, text))
    return docs


def parse_queries(stream: IO[str],
                  source: str = '<queries>') -> List[QueryRecord]:
    queries = []
    seen = set()
    for number, line in _lines(stream):
        columns = line.split('\t')
        if len(columns) not in (2, 3):
            raise DataFault(
                'Expected qid<TAB>text[<TAB>group]; query text may not '
                'contain tabs.', source, number)
        query_id, text = columns[0], columns[1]
        group = columns[2] if len(columns) == 3 and columns[2] else None
        if not query_id or not text.strip():
            raise DataFault('Empty query id or text.', source, number)
        if query_id in seen:
            raise DataFault(f'Duplicate query id {query_id}.', source, number)
        seen.add(query_id)
        queries.append(QueryRecord(query_id, text, group))
    return queries


def write_queries(queries: Sequence[QueryRecord], stream: IO[str]) -> None:
    check_unique_ids(queries, 'query')
    for query in sorted(queries, key=lambda q: q.id):
        if '\t' in query.text or '\n' in query.text:
            raise DataFault(f'Query {query.id} text contains a tab or newline.')
        row = [query.id, query.text]
        if query.group is not None:
            row.append(query.group)
        stream.write('\t'.join(row) + '\n')


def write_json(payload: Any, stream: IO[str]) -> None:
    json.dump(payload, stream, sort_keys=True, indent=2, ensure_ascii=False)
    stream.write('\n')


def report_to_dict(report: MetricReport) -> Dict[str, Any]:
    return {
        'metric': report.label,
        'cutoff': report.cutoff,
        'per_query': dict(report.per_query),
        'aggregate': report.aggregate,
        'extras': dict(report.extras),
        'skipped': list(report.skipped),
        'config': dict(report.config),
    }


def report_from_dict(payload: Mapping[str, Any],
                     source: str = '<report>') -> MetricReport:
    missing = [
        key for key in ('metric', 'cutoff', 'per_query', 'aggregate')
        if key not in payload
    ]
    if missing:
        raise DataFault(f'Report is missing {missing}.', source)
    name = str(payload['metric']).split('@')[0]
    return MetricReport(metric_name='ap' if name == 'map' else name,
                        cutoff=payload['cutoff'],
                        per_query={
                            str(k): float(v)
                            for k, v in payload['per_query'].items()
                        },
                        aggregate=float(payload['aggregate']),
                        extras=dict(payload.get('extras', {})),
                        skipped=tuple(payload.get('skipped', ())),
                        config=dict(payload.get('config', {})))


def write_report(report: MetricReport, stream: IO[str]) -> None:
    write_json(report_to_dict(report), stream)


def write_reports(reports: Sequence[MetricReport], stream: IO[str]) -> None:
    """A bundle keyed by metric label."""
    write_json({report.label: report_to_dict(report) for report in reports},
               stream)


def _load_json(stream: IO[str], source: str) -> Any:
    try:
        return json.load(stream)
    except json.JSONDecodeError as e:
        raise DataFault(f'Invalid JSON: {e.msg}', source, e.lineno) from e


def parse_report(stream: IO[str], source: str = '<report>') -> MetricReport:
    return report_from_dict(_load_json(stream, source), source)


def parse_reports(stream: IO[str],
                  source: str = '<report>') -> Dict[str, MetricReport]:
    """Reads a single report or a bundle, keyed by metric label."""
    payload = _load_json(stream, source)
    if not isinstance(payload, dict):
        raise DataFault('Expected a JSON object.', source)
    if 'per_query' in payload:
        report = report_from_dict(payload, source)
        return {report.label: report}
    return {
        label: report_from_dict(value, source)
        for label, value in sorted(payload.items())
    }


def _optional(value: Optional[Any]) -> str:
    return '' if value is None else str(value)


def write_manifest(manifest: AttackManifest, stream: IO[str]) -> None:
    stream.write('\t'.join(MANIFEST_COLUMNS) + '\n')
    for entry in sorted(manifest, key=lambda e: e.query_id):
        prefix = [entry.query_id, entry.original, entry.attacked]
        if entry.skipped:
            rows = [[_SKIPPED_KIND, '', '', '', '']]
        else:
            rows = [[
                edit.kind,
                str(edit.word_index),
                _optional(edit.char_index),
                _optional(edit.inserted),
                _optional(edit.removed),
            ] for edit in entry.edits]
        for row in rows:
            stream.write('\t'.join(prefix + row + [str(entry.seed)]) + '\n')


def parse_manifest(stream: IO[str],
                   source: str = '<manifest>') -> AttackManifest:
    """Reads a manifest; six-column files carry no replay detail."""
    grouped: Dict[str, Dict[str, Any]] = {}
    order: List[str] = []
    for number, line in _lines(stream):
        columns = line.split('\t')
        if tuple(columns) in (MANIFEST_COLUMNS, MANIFEST_COLUMNS[:6]):
            continue
        if len(columns) not in (6, len(MANIFEST_COLUMNS)):
            raise DataFault(
                f'Expected 6 or {len(MANIFEST_COLUMNS)} columns, got '
                f'{len(columns)}.', source, number)
        columns += [''] * (len(MANIFEST_COLUMNS) - len(columns))
        query_id, original, attacked, kind, word_index, char_index = columns[:6]
        inserted, removed, seed = columns[6:]
        if query_id not in grouped:
            order.append(query_id)
            grouped[query_id] = {
                'original': original,
                'attacked': attacked,
                'seed': _parse_int(seed, 'Seed', source, number) if seed else 0,
                'edits': [],
            }
        elif (grouped[query_id]['original'], grouped[query_id]['attacked']) != (
                original, attacked):
            raise DataFault(f'Rows of query {query_id} disagree on its text.',
                            source, number)
        if kind == _SKIPPED_KIND:
            continue
        try:
            grouped[query_id]['edits'].append(
                EditRecord(kind=kind,
                           word_index=_parse_int(word_index, 'word_index',
                                                 source, number),
                           char_index=_parse_int(char_index, 'char_index',
                                                 source, number)
                           if char_index else None,
                           inserted=inserted or None,
                           removed=removed or None))
        except DataFault:
            raise
        except ValueError as e:
            raise DataFault(str(e), source, number) from e

    entries = tuple(
        AttackManifestEntry(query_id, grouped[query_id]['original'],
                            grouped[query_id]['attacked'],
                            tuple(grouped[query_id]['edits']),
                            grouped[query_id]['seed']) for query_id in order)
    skipped = tuple(entry.query_id for entry in entries if entry.skipped)
    return AttackManifest(entries, skipped)


def _read(path: str, parser, *args):
    with open(path, encoding='utf-8') as f:
        return parser(f, *args)


def read_run(path: str) -> RunSet:
    return _read(path, parse_run, path)


def read_qrels(path: str) -> Qrels:
    return _read(path, parse_qrels, path)


def read_corpus(path: str, fmt: str = 'tsv') -> List[DocRecord]:
    return _read(path, parse_corpus, fmt, path)


def read_queries(path: str) -> List[QueryRecord]:
    return _read(path, parse_queries, path)


def read_reports(path: str) -> Dict[str, MetricReport]:
    return _read(path, parse_reports, path)


def read_manifest(path: str) -> AttackManifest:
    return _read(path, parse_manifest, path)
