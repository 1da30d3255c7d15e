from importlib import resources
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fixed", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fixed")

DATA = Path(str(resources.files("jitd") / "data"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA
