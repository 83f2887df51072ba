"""Test configuration and fixtures"""

from fractions import Fraction

import pytest

from speedchange.catalog import builtin_model
from speedchange.config import reset_settings
from speedchange.model import DensityContext


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )


@pytest.fixture(autouse=True)
def reset_cached_settings(monkeypatch):
    """Fresh settings for each test, with a single worker for reproducible ordering"""
    monkeypatch.setenv("SPEEDCHANGE_THREADS", "1")
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def half():
    """Density 1/2, where chi = 1/4 and kappa = 0"""
    return DensityContext(rho=Fraction(1, 2))


@pytest.fixture
def fifth():
    """Density 1/5, where sqrt(chi) = 2/5 and kappa = 3/2 are both rational"""
    return DensityContext(rho=Fraction(1, 5))


@pytest.fixture
def simplerates():
    return builtin_model("simplerates")


@pytest.fixture
def asep():
    return builtin_model("asep")


@pytest.fixture
def tasep():
    return builtin_model("tasep")


@pytest.fixture
def ssep():
    return builtin_model("ssep")
