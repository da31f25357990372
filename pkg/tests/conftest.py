"""Shared fixtures.

The two full-size experiment runs below are expensive (minutes each) and are
consumed by several acceptance checks, so they run once per session. Unit
test modules never request them.
"""
import dataclasses

import pytest

from specsl import default_config, run_experiment


@pytest.fixture(scope="session")
def correctness_result(tmp_path_factory):
    """Full-size two-arm correctness experiment, single worker."""
    out = tmp_path_factory.mktemp("correctness-t1")
    cfg = dataclasses.replace(
        default_config("correctness", out_dir=str(out)), thread_count=1
    )
    return run_experiment(cfg)


@pytest.fixture(scope="session")
def scaling_result(tmp_path_factory):
    """Full-size scaling sweep, single worker."""
    out = tmp_path_factory.mktemp("scaling-t1")
    cfg = dataclasses.replace(default_config("scaling", out_dir=str(out)), thread_count=1)
    return run_experiment(cfg)
