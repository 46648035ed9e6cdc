"""Shared fixtures: reference configurations used across the suite."""

from dataclasses import replace

import pytest

from musalink.config import SystemConfig, default_config


def reference_config(n_active=10, lam=4.0, n_slots=20) -> SystemConfig:
    """Default parameter set with the experiment axes overridden."""
    cfg = default_config()
    return replace(
        cfg,
        traffic=replace(cfg.traffic, n_active=n_active, lam=lam),
        frame=replace(cfg.frame, n_slots=n_slots),
    )


@pytest.fixture
def default_cfg() -> SystemConfig:
    return default_config()
