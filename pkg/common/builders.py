# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

import math

from omegaconf import OmegaConf as om
from src.metrics import MetricSpec, parse_metric
from src.rankers import DEFAULT_GRIDS, RankerConfig, canonical_model
from src.text import STEMMERS, TokenizerConfig


def build_tokenizer_config(cfg):
    stemmer = cfg.get('stemmer', 'none')
    if stemmer not in STEMMERS:
        raise ValueError(f'Not sure how to build stemmer: {stemmer}')
    return TokenizerConfig(lowercase=bool(cfg.get('lowercase', True)),
                           stemmer=stemmer,
                           strip_punctuation=bool(
                               cfg.get('strip_punctuation', True)))


def build_ranker_config(cfg):
    try:
        model = canonical_model(cfg.model)
    except ValueError:
        raise ValueError(f'Not sure how to build ranker: {cfg.model}')
    return RankerConfig(model=model,
                        k1=float(cfg.get('k1', 1.2)),
                        b=float(cfg.get('b', 0.75)),
                        mu=float(cfg.get('mu', 1000.0)),
                        top_k=int(cfg.get('top_k', 1000)),
                        score_all=bool(cfg.get('score_all', False)))


def build_metric_specs(labels):
    specs = []
    for label in labels:
        try:
            spec = parse_metric(str(label))
        except ValueError:
            raise ValueError(f'Not sure how to build metric: {label}')
        if spec not in specs:
            specs.append(spec)
    return specs


def build_objective(label) -> MetricSpec:
    return build_metric_specs([label])[0]


def build_grid(model, grid_cfg):
    """``default`` (or nothing) selects the default grids."""
    model = canonical_model(model)
    if grid_cfg is None or grid_cfg == 'default':
        return DEFAULT_GRIDS[model]
    if isinstance(grid_cfg, str):
        raise ValueError(f'Not sure how to build grid: {grid_cfg}')
    grid = {}
    for name, values in grid_cfg.items():
        if isinstance(values, (int, float)):
            values = [values]
        elif om.is_dict(values) or isinstance(values, dict):
            values = _arange(values['start'], values['stop'], values['step'])
        grid[str(name)] = [float(v) for v in values]
    return grid


def _arange(start, stop, step):
    """Inclusive range that does not accumulate float error."""
    if step <= 0:
        raise ValueError(f'Grid step must be > 0, got {step}.')
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(max(count, 0))]
