import copy
import json
import shutil
import tempfile
from pathlib import Path

import pytest

from core.device import BUNDLED_CONFIG, BUNDLED_MULTI_CONFIG, load_config
from core.dynamics import calibrate_flat_top

ROOT = Path(__file__).resolve().parent.parent
CLI = ROOT / "cli.py"


@pytest.fixture
def temp_directory():
    """Fixture for creating a temporary directory"""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture(scope="session")
def bundled_config():
    """Single-spectator LHS device shipped with the package"""
    return load_config(BUNDLED_CONFIG)


@pytest.fixture(scope="session")
def multi_config():
    """Three-spectator LHS device shipped with the package"""
    return load_config(BUNDLED_MULTI_CONFIG)


@pytest.fixture
def bundled_dict():
    """Editable copy of the bundled config document"""
    return copy.deepcopy(json.loads(BUNDLED_CONFIG.read_text(encoding="utf-8")))


@pytest.fixture
def write_config(temp_directory):
    """Fixture returning a writer for config documents"""
    def write(data, name="device.json"):
        path = temp_directory / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path
    return write


def mode_record(data, label):
    for record in data["modes"]:
        if record["label"] == label:
            return record
    raise KeyError(label)


@pytest.fixture(scope="session")
def flat_top_cz(bundled_config):
    """Flat-top CZ of the bundled device, calibrated with the spectator parked"""
    return calibrate_flat_top(bundled_config)
