import logging

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_pcnta_logger():
    # configure_logging in CLI tests sets propagate=False; restore for caplog
    yield
    logger = logging.getLogger("pcnta")
    logger.handlers.clear()
    logger.propagate = True
