"""Shared fixtures: a tiny config plus session-scoped trained artifacts.

The tiny configuration trades accuracy for speed; tests that assert on
quality trends use the desk config in the acceptance suite instead.
"""

from __future__ import annotations

import copy
from pathlib import Path

import pytest

from modeldna.config import RunConfig, parse_run_config
from modeldna.engine import MgmpConfig, train_mgmp
from modeldna.pipeline import TaskBundle, build_tasks, run_stage
from modeldna.pool import ModelPool, load_pool

TINY_SPEC = {
    "schemaVersion": 1,
    "seed": 11,
    "data": {
        "classesPerTask": 3,
        "poolTasks": 1,
        "evalTasks": 1,
        "perClass": 8,
        "dim": 6,
        "spread": 0.4,
    },
    "model": {"hidden": [12], "dropoutRate": 0.0},
    "sourceTrain": {"learningRate": 0.02, "epochs": 8, "batchSize": 8},
    "fineTune": {"learningRate": 0.005, "epochs": 2, "batchSize": 8},
    "scratchTrain": {"learningRate": 0.02, "epochs": 8, "batchSize": 8},
    "probeTrain": {"learningRate": 0.02, "epochs": 6, "batchSize": 8},
    "pool": {
        "poolHomologous": 1,
        "poolNonHomologous": 1,
        "evalHomologous": 1,
        "evalNonHomologous": 1,
    },
    "mgmp": {
        "epochs": 3,
        "batchSize": 2,
        "learningRate": 0.002,
        "dropoutRate": 0.0,
        "generatorHidden": [16],
        "classifierHidden": [16],
    },
    "deltaSweep": [0.5, 0.9],
}


def tiny_spec(**overrides) -> dict:
    """Deep copy of the tiny run spec with top-level keys replaced."""
    spec = copy.deepcopy(TINY_SPEC)
    spec.update(overrides)
    return spec


@pytest.fixture
def tiny_cfg() -> RunConfig:
    return parse_run_config(tiny_spec())


@pytest.fixture(scope="session")
def small_run(tmp_path_factory) -> tuple[RunConfig, Path]:
    """A run directory with data, source model, and pool already built."""
    out = tmp_path_factory.mktemp("small-run")
    cfg = parse_run_config(tiny_spec())
    run_stage("train-source", cfg, out_dir=out)
    run_stage("build-pool", cfg, out_dir=out)
    return cfg, out


@pytest.fixture(scope="session")
def small_pool(small_run) -> ModelPool:
    _, out = small_run
    return load_pool(out)


@pytest.fixture(scope="session")
def small_tasks(small_run) -> TaskBundle:
    cfg, _ = small_run
    return build_tasks(cfg)


@pytest.fixture(scope="session")
def small_mgmp(small_run, small_pool, small_tasks):
    """A fingerprint model trained for a few epochs on the small pool."""
    cfg, _ = small_run
    return train_mgmp(small_pool, small_tasks.source, cfg.mgmp_config())


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Repeat one verdict line per acceptance criterion after the test run.

    The tests print the same lines themselves, but stdout capture hides them
    on passing runs; this summary makes the verdicts visible regardless.
    """
    import re

    verdicts: dict[int, bool] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", nodeid)
            if match:
                n = int(match.group(1))
                verdicts[n] = verdicts.get(n, True) and status == "passed"
    if verdicts:
        terminalreporter.write_line("")
        for n in sorted(verdicts):
            outcome = "PASS" if verdicts[n] else "FAIL"
            terminalreporter.write_line(f"[acceptance] criterion {n}: {outcome}")
