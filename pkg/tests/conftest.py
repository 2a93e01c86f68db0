"""
Shared pytest fixtures for the ROC-PCA tests.
"""

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def mock_config(monkeypatch, tmp_path):
    """
    *****
    Purpose: Override config module constants so tests run single-threaded,
    quickly, and never write outside a temporary directory.

    Parameters:
    monkeypatch monkeypatch: pytest monkeypatch fixture for patching module attributes
    pathlib.Path tmp_path: pytest tmp_path fixture providing a unique temporary directory

    Returns:
    pathlib.Path: the temporary OUTPUT_DIR path created for the test
    *****
    """
    output_dir = tmp_path / "rocpca-out"
    output_dir.mkdir()

    import config

    # Solver defaults (kept at their shipped values unless a test patches them)
    monkeypatch.setattr(config, "ETA", 1e-3)
    monkeypatch.setattr(config, "KAPPA", 0.1)
    monkeypatch.setattr(config, "RHO", 1e-3)
    monkeypatch.setattr(config, "WINDOW_T", 10)
    monkeypatch.setattr(config, "NU", 0.05)

    # Smaller multi-start so unit fits stay fast
    monkeypatch.setattr(config, "M0", 4)
    monkeypatch.setattr(config, "N0", 2)
    monkeypatch.setattr(config, "M1", 2)

    # Reproducibility and concurrency
    monkeypatch.setattr(config, "SEED", 0)
    monkeypatch.setattr(config, "THREADS", 1)
    monkeypatch.setattr(config, "DEFAULT_REPS", 2)

    # File paths and logging
    monkeypatch.setattr(config, "OUTPUT_DIR", str(output_dir))
    monkeypatch.setattr(config, "TABLE_FORMAT", "csv")
    monkeypatch.setattr(config, "DEBUG", True)

    return output_dir


@pytest.fixture
def rng():
    """Seeded generator shared by property tests."""
    return np.random.default_rng(20240601)


def make_low_rank_data(n=60, p=8, r=2, sigma=0.0, outlier_rows=(), leverage=0.0, seed=1):
    """
    *****
    Purpose: Build a small rank-r data set with optional row outliers in the complement

    Parameters:
    int n: observations
    int p: features
    int r: principal subspace dimension
    float sigma: noise standard deviation
    tuple outlier_rows: 0-based rows shifted along the complement
    float leverage: size of the shift in every complement coordinate
    int seed: generator seed

    Returns:
    tuple: (x ndarray, v_star ndarray p x r, v_perp ndarray p x (p - r))
    *****
    """
    gen = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(gen.standard_normal((p, p)))
    v_star, v_perp = basis[:, :r], basis[:, r:]
    scores = gen.standard_normal((n, r)) * np.linspace(10.0, 5.0, r)
    x = scores @ v_star.T
    for row in outlier_rows:
        x[row] += leverage * v_perp.sum(axis=1)
    if sigma > 0:
        x = x + sigma * gen.standard_normal((n, p))
    return x, v_star, v_perp


@pytest.fixture
def low_rank_data():
    """Noiseless 60 x 8 rank-2 data set without outliers."""
    return make_low_rank_data()
