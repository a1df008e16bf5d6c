import sys
from pathlib import Path

import numpy as np
import pytest

# make the sibling oracles module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_container(tmp_path):
    """Path factory for tensor container files."""

    def make(name="tensors.fpqt"):
        return str(tmp_path / name)

    return make
