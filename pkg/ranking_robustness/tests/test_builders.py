# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

import pathlib
import sys

import pytest
from omegaconf import OmegaConf as om
from src.metrics import MetricSpec
from src.rankers import DEFAULT_GRIDS

sys.path.append(str(pathlib.Path(__file__).parent.parent.parent))
from common.builders import (build_grid, build_metric_specs, build_objective,
                             build_ranker_config, build_tokenizer_config)
from common.logging_utils import recorded_config

YAMLS = pathlib.Path(__file__).parent.parent / 'yamls'


def test_build_ranker_config_from_defaults():
    defaults = om.load(YAMLS / 'defaults.yaml')
    config = build_ranker_config(defaults.search.ranker)
    assert (config.model, config.k1, config.b, config.top_k) == ('bm25', 1.2,
                                                                 0.75, 1000)

    ql = build_ranker_config(om.create({'model': 'ql', 'mu': 100}))
    assert ql.model == 'ql_dirichlet'
    assert ql.mu == 100.0

    with pytest.raises(ValueError, match='Not sure how to build ranker'):
        build_ranker_config(om.create({'model': 'dense'}))


def test_build_tokenizer_config():
    config = build_tokenizer_config(om.create({'stemmer': 'simple_suffix'}))
    assert config.stemmer == 'simple_suffix'
    assert config.lowercase
    with pytest.raises(ValueError, match='Not sure how to build stemmer'):
        build_tokenizer_config(om.create({'stemmer': 'krovetz'}))


def test_build_metric_specs():
    specs = build_metric_specs(['map', 'ndcg@20', 'MAP', 'p@5'])
    assert specs == [MetricSpec('ap'), MetricSpec('ndcg', 20), MetricSpec('p', 5)]
    assert build_objective('mrr@10') == MetricSpec('mrr', 10)
    with pytest.raises(ValueError, match='Not sure how to build metric'):
        build_metric_specs(['err@20'])


def test_build_grid():
    assert build_grid('bm25', 'default') == DEFAULT_GRIDS['bm25']
    assert build_grid('qld', None) == DEFAULT_GRIDS['ql_dirichlet']

    grid = build_grid('bm25', om.create({'k1': 1.2, 'b': [0.5, 0.75]}))
    assert grid == {'k1': [1.2], 'b': [0.5, 0.75]}

    grid = build_grid('ql', {'mu': {'start': 100, 'stop': 500, 'step': 100}})
    assert grid == {'mu': [100.0, 200.0, 300.0, 400.0, 500.0]}

    with pytest.raises(ValueError):
        build_grid('bm25', 'fine')
    with pytest.raises(ValueError):
        build_grid('bm25', {'k1': {'start': 1, 'stop': 2, 'step': 0}})


def test_fine_grid_yaml():
    cfg = om.load(YAMLS / 'bm25_fine_grid.yaml')
    grid = build_grid(cfg.ranker.model, cfg.grid)
    assert len(grid['k1']) == 15
    assert grid['k1'][0] == 0.6
    assert grid['k1'][-1] == 2.0
    assert grid['k1'][4] == 1.0
    assert build_objective(cfg.objective) == MetricSpec('ndcg', 20)


def test_recorded_config_drops_execution_keys():
    cfg = om.create({'seed': 1, 'threads': 8, 'progress_bar': True, 'out': 'x'})
    assert recorded_config(cfg) == {'seed': 1, 'out': 'x'}
