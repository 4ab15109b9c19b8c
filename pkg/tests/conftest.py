import logging

import pytest

from fusion_framework.scenarios.base_scenario import load_scenario
from fusion_framework.scenarios.generator import generate_scenario, write_scenario
from tests.helpers import START_MS


@pytest.fixture
def lunch_spec():
    return load_scenario("lunch").get_spec(seed=7, start_epoch_ms=START_MS)


@pytest.fixture
def lunch_data(lunch_spec):
    return generate_scenario(lunch_spec)


@pytest.fixture
def lunch_dir(tmp_path, lunch_data):
    data_dir = tmp_path / "lunch"
    write_scenario(lunch_data, str(data_dir))
    return data_dir


@pytest.fixture
def restore_logging():
    """Undoes the handler setup done by the CLI entry point."""
    yield
    logger = logging.getLogger("fusion_framework")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
