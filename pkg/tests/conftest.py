"""Pytest configuration for dampwave tests."""
import pytest
import yaml

from dampwave.workers import THREADS_ENV_VAR


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Run every test serially unless it sets the thread count itself."""
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration to a YAML file under tmp_path and return its path."""

    def _write(raw, name="run.yml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw, sort_keys=False))
        return path

    return _write

