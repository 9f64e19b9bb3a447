import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqjde import QamModel, ShiftInMeanModel


@pytest.fixture(scope="session")
def sim_model():
    return ShiftInMeanModel()


@pytest.fixture(scope="session")
def qam_model():
    return QamModel()
