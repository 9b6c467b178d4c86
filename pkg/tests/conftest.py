import pytest

from nadi_fixtures import nadi_table_manifest


@pytest.fixture
def nadi_asr_manifest():
    return nadi_table_manifest()
