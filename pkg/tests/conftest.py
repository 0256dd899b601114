"""
Pytest configuration and shared fixtures.
"""

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest


# Configure pytest-asyncio
def pytest_configure(config):
    """Configure pytest asyncio."""
    config.option.asyncio_mode = "auto"


@pytest.fixture
def rng():
    """Seeded generator so property tests are reproducible."""
    return np.random.default_rng(20240611)


@pytest.fixture
def write_csv(tmp_path: Path) -> Callable[..., Path]:
    """Write a two-column CSV into tmp_path and return its path."""

    def _write(
        xs: Sequence[float],
        ys: Sequence[float],
        name: str = "data.csv",
        header: str = "x,y",
    ) -> Path:
        path = tmp_path / name
        rows = [header] + [f"{float(x)!r},{float(y)!r}" for x, y in zip(xs, ys)]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    return _write
