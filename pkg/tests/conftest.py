import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR
