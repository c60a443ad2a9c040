from __future__ import annotations

import numpy as np
import pytest

from taskdrift import ClusterParams, DriftParams, EngineConfig, orthogonal_task_specs


@pytest.fixture
def small_config() -> EngineConfig:
    """Fast deterministic config for unit tests: 64-dim, fixed drift threshold."""
    return EngineConfig(
        dim=64,
        k=10,
        cluster=ClusterParams(eps=0.3, min_pts=10),
        drift=DriftParams(fixed_threshold=0.05, rng_seed=11),
        head_iterations=120,
        seed=11,
    )


@pytest.fixture
def small_specs(small_config):
    return orthogonal_task_specs(6, dim=small_config.dim, spread=0.05)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240)
