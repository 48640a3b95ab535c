"""Shared fixtures and markers for the tvnets test suite."""

import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: long-running acceptance gate (cached on disk)"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


def make_var1_panel(rng, n=80, d=3, rho=0.4):
    """Stationary VAR(1) panel with a banded transition matrix."""
    from tvnets import TimeSeriesPanel

    A = np.zeros((d, d))
    idx = np.arange(d)
    A[idx, idx] = rho
    A[idx[:-1], idx[1:]] = 0.2
    X = np.zeros((n + 50, d))
    for t in range(1, n + 50):
        X[t] = A @ X[t - 1] + rng.standard_normal(d)
    return TimeSeriesPanel(X[50:])
