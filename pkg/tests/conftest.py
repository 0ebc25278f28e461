import pytest

from builders import fanout_pipeline, two_stage_pipeline


@pytest.fixture
def two_stage():
    return two_stage_pipeline()


@pytest.fixture
def fanout():
    return fanout_pipeline()
