# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

import json
import os

import pandas as pd
import pytest
from main import EXIT_DATA_FAULT, EXIT_OK, EXIT_USAGE, main

from tests.utils import read_text, write_synth_collection

PIPELINE_OUTPUTS = [
    'index.json', 'base.run', 'manifest.tsv', 'attacked.tsv', 'attacked.run',
    'base.json', 'attacked.json', 'drop.json', 'drop_mrr.json'
]


def run_pipeline(workdir, monkeypatch, threads=1):
    """index -> search -> attack -> search attacked -> evaluate -> droprate."""
    os.makedirs(workdir, exist_ok=True)
    write_synth_collection(workdir, num_docs=100, num_queries=20, seed=42)
    monkeypatch.chdir(workdir)
    threads = str(threads)
    steps = [
        ['index', '--corpus', 'corpus.tsv', '--out', 'index.json'],
        [
            'search', '--index', 'index.json', '--queries', 'queries.tsv',
            '--out', 'base.run', '--threads', threads
        ],
        [
            'attack', '--queries', 'queries.tsv', '--mode', 'char2', '--out',
            'manifest.tsv', '--out-queries', 'attacked.tsv',
            '--threads', threads
        ],
        [
            'search', '--index', 'index.json', '--queries', 'attacked.tsv',
            '--out', 'attacked.run', '--threads', threads
        ],
        [
            'evaluate', '--run', 'base.run', '--qrels', 'qrels.txt', '--out',
            'base.json'
        ],
        [
            'evaluate', '--run', 'attacked.run', '--qrels', 'qrels.txt',
            '--out', 'attacked.json'
        ],
        [
            'droprate', '--treated', 'attacked.json', '--baseline',
            'base.json', '--out', 'drop.json'
        ],
        [
            'droprate', '--treated', 'attacked.json', '--baseline',
            'base.json', '--metric', 'mrr@10', '--out', 'drop_mrr.json'
        ],
    ]
    for argv in steps:
        assert main(argv) == EXIT_OK, argv
    return {name: read_text(name) for name in PIPELINE_OUTPUTS}


def test_pipeline(tmp_path, monkeypatch):
    outputs = run_pipeline(tmp_path, monkeypatch)

    reports = json.loads(outputs['base.json'])
    assert sorted(reports) == [
        'map', 'mrr@10', 'mrr@100', 'ndcg@20', 'p@20', 'r@20'
    ]
    base = reports['map']
    assert set(base['extras']) == {'gmap', 'pct_no', 'variance', 'epsilon',
                                   'vnap'}
    assert base['config']['seed'] == 42
    assert 'threads' not in base['config']
    assert 0.0 < base['aggregate'] <= 1.0
    assert len(base['per_query']) == 20

    drop = json.loads(outputs['drop.json'])
    attacked = json.loads(outputs['attacked.json'])['map']
    assert drop['baseline'] == base['aggregate']
    assert drop['treated'] == attacked['aggregate']
    assert drop['drop_rate'] == pytest.approx(
        (attacked['aggregate'] - base['aggregate']) / base['aggregate'])
    assert 0.0 <= drop['p_value'] <= 1.0
    assert drop['num_shared'] == 20

    manifest_rows = outputs['manifest.tsv'].splitlines()[1:]
    assert {row.split('\t')[0] for row in manifest_rows} == {
        f'q{i}' for i in range(1, 21)
    }

    mrr = json.loads(outputs['drop_mrr.json'])
    assert mrr['metric'] == 'mrr@10'
    assert 0.0 <= mrr['p_value'] <= 1.0


@pytest.mark.parallel
def test_pipeline_is_reproducible_and_thread_independent(
        tmp_path, monkeypatch):
    first = run_pipeline(tmp_path / 'first', monkeypatch, threads=1)
    second = run_pipeline(tmp_path / 'second', monkeypatch, threads=1)
    parallel = run_pipeline(tmp_path / 'parallel', monkeypatch, threads=8)
    for name in PIPELINE_OUTPUTS:
        assert first[name] == second[name], name
        assert first[name] == parallel[name], name


def write_lines(path, lines):
    with open(path, 'w') as f:
        f.write(''.join(line + '\n' for line in lines))


def test_evaluate_hand_computed_map(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_lines('tiny.run', [
        'q1 Q0 r1 1 3.0 t', 'q1 Q0 x1 2 2.0 t', 'q2 Q0 x1 1 3.0 t',
        'q2 Q0 r2 2 2.0 t', 'q3 Q0 x1 1 3.0 t', 'q3 Q0 x2 2 2.0 t'
    ])
    write_lines('tiny.qrels',
                ['q1 0 r1 1', 'q2 0 r2 1', 'q3 0 r3 2', 'q3 0 x1 0'])
    assert main([
        'evaluate', '--run', 'tiny.run', '--qrels', 'tiny.qrels', '--metric',
        'map', 'p@1', '--out', 'tiny.json'
    ]) == EXIT_OK
    reports = json.loads(read_text('tiny.json'))
    assert reports['map']['per_query'] == {'q1': 1.0, 'q2': 0.5, 'q3': 0.0}
    assert reports['map']['aggregate'] == pytest.approx(0.5)
    assert reports['p@1']['aggregate'] == pytest.approx(1 / 3)
    assert reports['map']['extras']['pct_no'] == pytest.approx(1 / 3)

    assert main([
        'droprate', '--treated', 'tiny.json', '--baseline', 'tiny.json',
        '--out', 'same.json'
    ]) == EXIT_OK
    same = json.loads(read_text('same.json'))
    assert same['drop_rate'] == 0.0
    assert same['p_value'] == 1.0
    assert same['significant'] is False


def test_restricted_evaluation(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_lines('tiny.run', ['q1 Q0 r1 1 3.0 t', 'q2 Q0 x1 1 3.0 t'])
    write_lines('tiny.qrels', ['q1 0 r1 1', 'q2 0 r2 1'])
    write_lines('subset.tsv', ['q1\tanything'])
    assert main([
        'evaluate', '--run', 'tiny.run', '--qrels', 'tiny.qrels', '--queries',
        'subset.tsv', '--metric', 'map', '--out', 'subset.json'
    ]) == EXIT_OK
    report = json.loads(read_text('subset.json'))['map']
    assert report['per_query'] == {'q1': 1.0}


def last_json_line(err):
    return json.loads(err.strip().splitlines()[-1])


def test_usage_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(['no-such-command']) == EXIT_USAGE
    assert main(['search', '--index', 'index.json']) == EXIT_USAGE
    assert 'missing required settings' in capsys.readouterr().err
    assert main(['slice', '--queries', 'q.tsv', '--out', 'o.tsv']) == EXIT_USAGE
    assert main(['index', '--corpus', 'c.tsv', '--out', 'i.json', '--threads',
                 '0']) == EXIT_USAGE
    assert main(['attack', '--queries', 'q.tsv', '--out', 'm.tsv', '--mode',
                 'word']) == EXIT_USAGE
    assert main(['evaluate', '--metric', 'bogus@@1', '--run', 'r', '--qrels',
                 'q', '--out', 'o']) == EXIT_DATA_FAULT


def test_data_faults_report_json(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(['evaluate', '--run', 'missing.run', '--qrels', 'missing',
                 '--out', 'o.json']) == EXIT_DATA_FAULT
    error = last_json_line(capsys.readouterr().err)
    assert error['type'] == 'FileNotFoundError'

    write_lines('bad.run', ['q1 Q0 d1 1 1.0 t', 'q1 Q0 d2 2 0.5'])
    write_lines('tiny.qrels', ['q1 0 d1 1'])
    assert main(['evaluate', '--run', 'bad.run', '--qrels', 'tiny.qrels',
                 '--out', 'o.json']) == EXIT_DATA_FAULT
    error = last_json_line(capsys.readouterr().err)
    assert error['type'] == 'DataFault'
    assert error['error'].startswith('bad.run:2: ')
    assert not os.path.exists('o.json')


def test_compare_tune_slice_summarize(tmp_path, monkeypatch, capsys):
    run_pipeline(tmp_path, monkeypatch)

    assert main(['compare', '--run-a', 'base.run', '--run-b', 'base.run',
                 '--out', 'same.json']) == EXIT_OK
    same = json.loads(read_text('same.json'))
    assert (same['tc'], same['kt']) == (0.0, 0.0)

    assert main(['compare', '--runs', 'base.run', 'attacked.run', 'base.run',
                 '--out', 'rounds.json']) == EXIT_OK
    rounds = json.loads(read_text('rounds.json'))
    assert 0.0 <= rounds['tc'] <= 1.0 and 0.0 <= rounds['kt'] <= 1.0
    assert main(['compare', '--runs', 'base.run', '--run-a', 'base.run',
                 '--out', 'x.json']) == EXIT_USAGE

    with open('grid.yaml', 'w') as f:
        f.write('grid:\n  k1: [0.9, 1.2]\n  b: 0.75\n')
    assert main([
        'tune', '--index', 'index.json', '--queries', 'queries.tsv',
        '--qrels', 'qrels.txt', '--grid', 'grid.yaml', '--objective',
        'ndcg@20', '--trace', 'trace.tsv', '--out', 'tune.json'
    ]) == EXIT_OK
    tuned = json.loads(read_text('tune.json'))
    assert tuned['grid_points'] == 2
    assert tuned['objective'] == 'ndcg@20'
    assert tuned['best']['k1'] in (0.9, 1.2)
    trace = pd.read_csv('trace.tsv', sep='\t')
    assert list(trace.columns) == ['k1', 'b', 'ndcg@20']
    assert trace['ndcg@20'].max() == pytest.approx(tuned['value'])

    assert main(['slice', '--queries', 'queries.tsv', '--include', 'what',
                 '--out', 'what.tsv']) == EXIT_OK
    assert [line.split('\t')[2] for line in read_text('what.tsv').splitlines()
           ] == ['what'] * 5
    assert main(['slice', '--queries', 'queries.tsv', '--exclude', 'what',
                 '--out', 'rest.tsv']) == EXIT_OK
    assert len(read_text('rest.tsv').splitlines()) == 15

    capsys.readouterr()
    assert main(['summarize', '--reports', 'base.json', 'attacked.json',
                 '--out', 'summary.tsv']) == EXIT_OK
    summary = pd.read_csv('summary.tsv', sep='\t')
    assert summary['report'].tolist() == ['base.json', 'attacked.json']
    assert {'map', 'vnap', 'pct_no', 'gmap', 'variance'} <= set(summary.columns)
    assert 'Pearson' not in capsys.readouterr().out


def test_config_file_and_overrides(tmp_path, monkeypatch):
    run_pipeline(tmp_path, monkeypatch)
    with open('ql.yaml', 'w') as f:
        f.write('ranker:\n  model: ql_dirichlet\n  mu: 100.0\n')
    assert main(['search', '--config', 'ql.yaml', '--index', 'index.json',
                 '--queries', 'queries.tsv', '--out', 'ql.run']) == EXIT_OK
    assert read_text('ql.run').split('\n')[0].endswith(' ql_dirichlet')

    assert main(['search', '--index', 'index.json', '--queries',
                 'queries.tsv', '--out', 'tagged.run', 'run_tag=mine',
                 'ranker.top_k=3']) == EXIT_OK
    lines = read_text('tagged.run').splitlines()
    assert all(line.endswith(' mine') for line in lines)
    assert max(int(line.split()[3]) for line in lines) <= 3
