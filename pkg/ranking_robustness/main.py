# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Command-line front end for the ranking robustness toolkit.

Every subcommand resolves its configuration as ``yamls/defaults.yaml``
(``common`` plus the subcommand section) <- ``--config`` file <- explicit
flags <- trailing ``key=value`` overrides, prints it, and writes it into the
JSON artifacts it produces. Exit codes: 0 success, 1 usage error, 2 data
fault (with a JSON error object on stderr).
"""

import argparse
import json
import pathlib
import sys
import warnings
from typing import Dict, List, Optional

import pandas as pd
from omegaconf import OmegaConf as om
from omegaconf.errors import OmegaConfBaseException
from src.attacks import (ATTACK_MODES, attack_query_set, attacked_queries,
                         build_vocabulary)
from src.index import build_index, load_index
from src.list_distance import compare_runs
from src.metrics import evaluate_run, parse_metric
from src.parallel import default_threads
from src.rankers import grid_tune, search
from src.records import DataFault, MetricReport, filter_queries
from src.robustness import (drop_rate, paired_significance,
                            pearson_correlation, robustness_extras)
from src.trec_io import (CORPUS_FORMATS, read_corpus, read_qrels,
                         read_queries, read_reports, read_run, write_json,
                         write_manifest, write_queries, write_reports,
                         write_run)

sys.path.append(str(pathlib.Path(__file__).parent.parent / 'common'))
from builders import (build_grid, build_metric_specs, build_objective,
                      build_ranker_config, build_tokenizer_config)
from logging_utils import log_config, recorded_config

DEFAULTS_PATH = pathlib.Path(__file__).parent / 'yamls' / 'defaults.yaml'

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA_FAULT = 2


class UsageError(Exception):
    """A flag combination that cannot run."""


class CliParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def _require(cfg, *keys):
    missing = [key for key in keys if cfg.get(key) is None]
    if missing:
        raise UsageError(
            f'missing required settings: {", ".join("--" + k.replace("_", "-") for k in missing)}'
        )


def _open_out(path):
    return open(path, 'w', encoding='utf-8', newline='\n')


def _write_json_file(payload, path):
    with _open_out(path) as f:
        write_json(payload, f)


def cmd_index(cfg):
    _require(cfg, 'corpus', 'out')
    if cfg.format not in CORPUS_FORMATS:
        raise UsageError(f'--format must be one of {list(CORPUS_FORMATS)}')
    print('Reading corpus...')
    corpus = read_corpus(cfg.corpus, cfg.format)
    print('Building index...')
    index = build_index(corpus,
                        build_tokenizer_config(cfg.tokenizer),
                        progress_bar=cfg.progress_bar)
    index.save(cfg.out)
    print(f'Built index with {index.doc_count} documents and '
          f'{len(index.terms())} terms')


def _candidate_pools(index, path) -> Optional[Dict[str, List[str]]]:
    if path is None:
        return None
    pools = {}
    for query_id, ranked in read_run(path).lists.items():
        unknown = [d for d in ranked.doc_ids if not index.has_doc(d)]
        if unknown:
            raise DataFault(
                f'Candidates of query {query_id} are not in the index: '
                f'{unknown[:5]}', source=path)
        pools[query_id] = ranked.doc_ids
    return pools


def cmd_search(cfg):
    _require(cfg, 'index', 'queries', 'out')
    ranker = build_ranker_config(cfg.ranker)
    print('Loading index...')
    index = load_index(cfg.index)
    queries = read_queries(cfg.queries)
    print(f'Ranking {len(queries)} queries with {ranker.model}...')
    run, diagnostics = search(index,
                              queries,
                              ranker,
                              run_tag=cfg.run_tag,
                              threads=cfg.threads,
                              progress_bar=cfg.progress_bar,
                              candidates=_candidate_pools(
                                  index, cfg.candidates))
    with _open_out(cfg.out) as f:
        write_run(run, f)
    if diagnostics.oov_terms:
        warnings.warn(f'{diagnostics.oov_terms} query term occurrences are '
                      'not in the collection and were skipped.')
    if diagnostics.unmatched_queries:
        warnings.warn(f'{len(diagnostics.unmatched_queries)} queries matched '
                      'no document.')
    print(f'Wrote {len(run)} ranked lists (oov_terms='
          f'{diagnostics.oov_terms}, unmatched_queries='
          f'{len(diagnostics.unmatched_queries)})')


def _restriction(cfg):
    if cfg.get('queries') is None:
        return None
    return [query.id for query in read_queries(cfg.queries)]


def evaluate_reports(run, qrels, specs, epsilon, query_ids, config):
    """One report per metric; run-level robustness extras on each."""
    ap_report = evaluate_run(run, qrels, parse_metric('map'), query_ids)
    extras = robustness_extras(ap_report.per_query, run, qrels, epsilon,
                               query_ids)
    reports = []
    for spec in specs:
        report = ap_report if spec.name == 'ap' else evaluate_run(
            run, qrels, spec, query_ids)
        reports.append(
            MetricReport(metric_name=report.metric_name,
                         cutoff=report.cutoff,
                         per_query=report.per_query,
                         aggregate=report.aggregate,
                         extras=extras,
                         skipped=report.skipped,
                         config=config))
    return reports


def cmd_evaluate(cfg):
    _require(cfg, 'run', 'qrels', 'out')
    specs = build_metric_specs(cfg.metrics)
    run = read_run(cfg.run)
    qrels = read_qrels(cfg.qrels)
    reports = evaluate_reports(run, qrels, specs, cfg.epsilon,
                               _restriction(cfg), recorded_config(cfg))
    with _open_out(cfg.out) as f:
        write_reports(reports, f)
    for report in reports:
        print(f'{report.label}: {report.aggregate:.4f}')
    extras = reports[0].extras
    print(f"vnap: {extras.get('vnap', float('nan')):.4f} "
          f"pct_no: {extras['pct_no']:.4f} gmap: {extras['gmap']:.4f}")


def cmd_attack(cfg):
    _require(cfg, 'queries', 'out')
    if cfg.mode not in ATTACK_MODES:
        raise UsageError(f'--mode must be one of {list(ATTACK_MODES)}')
    vocabulary = []
    if cfg.mode == 'word':
        _require(cfg, 'vocab_from_index')
        vocabulary = build_vocabulary(load_index(cfg.vocab_from_index),
                                      cfg.vocab_size)
    queries = read_queries(cfg.queries)
    print(f'Attacking {len(queries)} queries ({cfg.mode}, seed={cfg.seed})...')
    manifest = attack_query_set(queries,
                                cfg.mode,
                                cfg.seed,
                                vocabulary,
                                threads=cfg.threads,
                                progress_bar=cfg.progress_bar)
    with _open_out(cfg.out) as f:
        write_manifest(manifest, f)
    if cfg.get('out_queries') is not None:
        with _open_out(cfg.out_queries) as f:
            write_queries(attacked_queries(manifest, queries), f)
    if manifest.skipped:
        warnings.warn(f'{len(manifest.skipped)} queries were unattackable and '
                      'passed through unmodified.')
    print(f'Attacked {len(manifest) - len(manifest.skipped)} queries, '
          f'skipped {len(manifest.skipped)}')


def _select_report(path, label) -> MetricReport:
    reports = read_reports(path)
    if label not in reports:
        raise DataFault(f'No {label} report; found {sorted(reports)}.',
                        source=path)
    return reports[label]


def cmd_droprate(cfg):
    _require(cfg, 'treated', 'baseline', 'out')
    label = build_objective(cfg.metric).label
    treated = _select_report(cfg.treated, label)
    baseline = _select_report(cfg.baseline, label)
    value = drop_rate(treated.aggregate, baseline.aggregate)
    p_value = paired_significance(treated.per_query, baseline.per_query)
    result = {
        'metric': label,
        'treated': treated.aggregate,
        'baseline': baseline.aggregate,
        'drop_rate': value,
        'p_value': p_value,
        'num_shared': len(set(treated.per_query) & set(baseline.per_query)),
        'significant': p_value <= cfg.alpha,
        'config': recorded_config(cfg),
    }
    _write_json_file(result, cfg.out)
    print(f'{label}: {baseline.aggregate:.4f} -> {treated.aggregate:.4f} '
          f'drop rate {100 * value:+.1f}% (p={p_value:.4g})')


def cmd_compare(cfg):
    _require(cfg, 'out')
    if cfg.get('runs'):
        if cfg.get('run_a') is not None or cfg.get('run_b') is not None:
            raise UsageError('use either --runs or --run-a/--run-b')
        paths = list(cfg.runs)
    else:
        _require(cfg, 'run_a', 'run_b')
        paths = [cfg.run_a, cfg.run_b]
    result = compare_runs([read_run(path) for path in paths])
    if result.skipped:
        warnings.warn(f'{len(result.skipped)} queries could not be compared.')
    _write_json_file(
        {
            'tc': result.tc,
            'kt': result.kt,
            'per_query': result.per_query,
            'skipped': list(result.skipped),
            'kt_skipped': list(result.kt_skipped),
            'config': recorded_config(cfg),
        }, cfg.out)
    print(f'TC: {result.tc:.4f} KT: {result.kt:.4f} over '
          f'{len(result.per_query)} queries')


def _grid_config(cfg):
    grid = cfg.grid
    if isinstance(grid, str) and grid != 'default':
        loaded = om.load(grid)
        grid = loaded.get('grid', loaded)
    return build_grid(cfg.ranker.model, grid)


def cmd_tune(cfg):
    _require(cfg, 'index', 'queries', 'qrels', 'out')
    base = build_ranker_config(cfg.ranker)
    grid = _grid_config(cfg)
    objective = build_objective(cfg.objective)
    index = load_index(cfg.index)
    queries = read_queries(cfg.queries)
    qrels = read_qrels(cfg.qrels)
    print(f'Tuning {base.model} on {len(queries)} queries for '
          f'{objective.label}...')
    result = grid_tune(index,
                       queries,
                       qrels,
                       base.model,
                       grid=grid,
                       objective=objective,
                       base=base,
                       threads=cfg.threads,
                       progress_bar=cfg.progress_bar)
    _write_json_file(
        {
            'model': result.config.model,
            'best': result.config.params(),
            'ranker': result.config.to_dict(),
            'objective': result.objective,
            'value': result.value,
            'grid_points': len(result.trace),
            'config': recorded_config(cfg),
        }, cfg.out)
    if cfg.get('trace') is not None:
        trace = pd.DataFrame([
            dict(config.params(), **{result.objective: value})
            for config, value in result.trace
        ])
        trace.to_csv(cfg.trace, sep='\t', index=False)
    print(f'Best {result.objective}={result.value:.4f} at '
          f'{result.config.params()}')


def cmd_slice(cfg):
    _require(cfg, 'queries', 'out')
    if not cfg.get('include') and not cfg.get('exclude'):
        raise UsageError('give --include and/or --exclude groups')
    queries = read_queries(cfg.queries)
    kept = filter_queries(queries, cfg.get('include'), cfg.get('exclude'))
    if not kept:
        warnings.warn('The slice is empty.')
    with _open_out(cfg.out) as f:
        write_queries(kept, f)
    print(f'Kept {len(kept)} of {len(queries)} queries')


def cmd_summarize(cfg):
    _require(cfg, 'reports', 'out')
    label = build_objective(cfg.metric).label
    rows = []
    for path in cfg.reports:
        report = _select_report(path, label)
        rows.append({
            'report': path,
            label: report.aggregate,
            'vnap': report.extras.get('vnap', float('nan')),
            'pct_no': report.extras.get('pct_no', float('nan')),
            'gmap': report.extras.get('gmap', float('nan')),
            'variance': report.extras.get('variance', float('nan')),
        })
    table = pd.DataFrame(rows)
    table.to_csv(cfg.out, sep='\t', index=False)
    print(table.to_string(index=False))
    complete = table.dropna(subset=['vnap'])
    if len(complete) >= 3:
        r, p = pearson_correlation(complete[label].tolist(),
                                   complete['vnap'].tolist())
        print(f'Pearson({label}, vnap) = {r:.4f} (p={p:.4g})')


COMMANDS = {
    'index': cmd_index,
    'search': cmd_search,
    'evaluate': cmd_evaluate,
    'attack': cmd_attack,
    'droprate': cmd_droprate,
    'compare': cmd_compare,
    'tune': cmd_tune,
    'slice': cmd_slice,
    'summarize': cmd_summarize,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML file merged over the defaults')
    common.add_argument('--seed', type=int)
    common.add_argument('--threads', type=int)
    common.add_argument('--epsilon', type=float)
    common.add_argument('--progress-bar',
                        dest='progress_bar',
                        action=argparse.BooleanOptionalAction,
                        default=None)
    common.add_argument('overrides',
                        nargs='*',
                        help='key=value overrides, e.g. ranker.k1=0.9')

    parser = CliParser(prog='main.py',
                       description='Ranking robustness toolkit')
    subparsers = parser.add_subparsers(dest='command',
                                       required=True,
                                       parser_class=CliParser)

    def add(name, help_text):
        return subparsers.add_parser(name, parents=[common], help=help_text)

    p = add('index', 'build an inverted index from a corpus')
    p.add_argument('--corpus')
    p.add_argument('--format', choices=CORPUS_FORMATS)
    p.add_argument('--out')
    p.add_argument('--stemmer', dest='tokenizer.stemmer')
    p.add_argument('--lowercase',
                   dest='tokenizer.lowercase',
                   action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument('--strip-punctuation',
                   dest='tokenizer.strip_punctuation',
                   action=argparse.BooleanOptionalAction,
                   default=None)

    for name, help_text in (('search', 'rank queries against an index'),
                            ('tune', 'grid-search ranker parameters')):
        p = add(name, help_text)
        p.add_argument('--index')
        p.add_argument('--queries')
        p.add_argument('--model', dest='ranker.model')
        p.add_argument('--top-k', dest='ranker.top_k', type=int)
        p.add_argument('--out')
        if name == 'search':
            p.add_argument('--k1', dest='ranker.k1', type=float)
            p.add_argument('--b', dest='ranker.b', type=float)
            p.add_argument('--mu', dest='ranker.mu', type=float)
            p.add_argument('--score-all',
                           dest='ranker.score_all',
                           action=argparse.BooleanOptionalAction,
                           default=None)
            p.add_argument('--candidates')
            p.add_argument('--run-tag')
        else:
            p.add_argument('--qrels')
            p.add_argument('--grid',
                           help='"default" or a YAML file with a grid mapping')
            p.add_argument('--objective')
            p.add_argument('--trace', help='TSV of every grid point')

    p = add('evaluate', 'score a run against qrels')
    p.add_argument('--run')
    p.add_argument('--qrels')
    p.add_argument('--queries', help='restrict to the ids in this query file')
    p.add_argument('--metric', dest='metrics', nargs='+')
    p.add_argument('--out')

    p = add('attack', 'perturb a query set')
    p.add_argument('--queries')
    p.add_argument('--mode', choices=list(ATTACK_MODES))
    p.add_argument('--vocab-from-index')
    p.add_argument('--vocab-size', type=int)
    p.add_argument('--out', help='attack manifest')
    p.add_argument('--out-queries', help='attacked query TSV')

    p = add('droprate', 'relative change between two reports')
    p.add_argument('--treated')
    p.add_argument('--baseline')
    p.add_argument('--metric')
    p.add_argument('--alpha', type=float)
    p.add_argument('--out')

    p = add('compare', 'top change and Kendall tau between runs')
    p.add_argument('--run-a')
    p.add_argument('--run-b')
    p.add_argument('--runs', nargs='+', help='rounds, compared in order')
    p.add_argument('--out')

    p = add('slice', 'filter a query file by group')
    p.add_argument('--queries')
    p.add_argument('--include', nargs='+')
    p.add_argument('--exclude', nargs='+')
    p.add_argument('--out')

    p = add('summarize', 'tabulate robustness measures of several reports')
    p.add_argument('--reports', nargs='+')
    p.add_argument('--metric')
    p.add_argument('--out')
    return parser


def resolve_config(args):
    defaults = om.load(DEFAULTS_PATH)
    cfg = om.merge(defaults.common, defaults[args.command])
    if args.config is not None:
        cfg = om.merge(cfg, om.load(args.config))
    for key, value in sorted(vars(args).items()):
        if key in ('command', 'config', 'overrides') or value is None:
            continue
        om.update(cfg, key, value, merge=True)
    if args.overrides:
        cfg = om.merge(cfg, om.from_cli(args.overrides))
    if cfg.threads is None:
        cfg.threads = default_threads()
    if not 0 <= cfg.seed < 2**64:
        raise UsageError(f'--seed must be an unsigned 64-bit integer, '
                         f'got {cfg.seed}')
    if cfg.threads < 1:
        raise UsageError(f'--threads must be >= 1, got {cfg.threads}')
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        cfg = resolve_config(args)
        log_config(cfg)
        COMMANDS[args.command](cfg)
    except (UsageError, OmegaConfBaseException) as e:
        print(f'main.py {args.command}: error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        print(json.dumps({
            'error': str(e),
            'type': type(e).__name__
        }),
              file=sys.stderr)
        return EXIT_DATA_FAULT
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
