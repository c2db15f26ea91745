# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

from omegaconf import OmegaConf as om

# Keys that change how a run executes but never what it outputs.
EXECUTION_KEYS = ('threads', 'progress_bar')


def log_config(cfg):
    print(om.to_yaml(cfg))


def recorded_config(cfg):
    """The resolved config as written into output artifacts."""
    container = om.to_container(cfg, resolve=True)
    return {
        key: value
        for key, value in container.items()
        if key not in EXECUTION_KEYS
    }
