from __future__ import annotations

import pytest

from csdial.schema import example_schema


@pytest.fixture(scope="session")
def schema():
    return example_schema()
