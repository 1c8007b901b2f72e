import pytest

from rfidguard.geometry import Scene
from rfidguard.simulator import SimConfig
from rfidguard.velocity import build_database


@pytest.fixture(scope="session")
def default_db():
    """Database at the default configuration (the one the CLI builds)."""
    return build_database(Scene(), SimConfig())


@pytest.fixture(scope="session")
def small_db():
    """Coarse database for fast detector tests."""
    return build_database(Scene(), SimConfig(), 0.4, 1.6, 0.04, trials=5)
