"""Functional test configuration for dampwave.

Every test gets a fresh project directory; commands are run in-process through
`dampwave.cli.main` so that stdout, stderr and the exit code can be inspected.

Environment Variables:
    DAMPWAVE_THREADS: worker threads for the sampled checks (default: 1)
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import pytest

from dampwave.cli import main


@dataclass
class RunResult:
    code: int
    stdout: str
    stderr: str


@dataclass
class Project:
    """A scratch directory holding one run configuration and its outputs."""

    root: Path
    capsys: Any
    write_config: Callable[[Dict[str, Any]], Path]

    @property
    def out(self) -> Path:
        return self.root / "out"

    def run(
        self,
        command: str,
        raw: Optional[Dict[str, Any]] = None,
        args: Sequence[str] = (),
        expect_code: int = 0,
        out: Optional[Path] = None,
    ) -> RunResult:
        """Run one command, asserting on its exit code."""
        argv = [command, "--out", str(out or self.out)]
        if raw is not None:
            argv += ["--config", str(self.write_config(raw))]
        argv += list(args)
        self.capsys.readouterr()
        code = main(argv)
        captured = self.capsys.readouterr()
        result = RunResult(code=code, stdout=captured.out, stderr=captured.err)
        assert code == expect_code, f"exit {code}, stderr: {result.stderr}"
        return result


@pytest.fixture
def project(tmp_path, capsys, monkeypatch, write_config):
    """A project directory that is also the working directory."""
    monkeypatch.chdir(tmp_path)
    return Project(root=tmp_path, capsys=capsys, write_config=write_config)


def pytest_collection_modifyitems(config, items):
    """Mark everything under tests/functional as functional."""
    for item in items:
        if "functional" in str(item.fspath):
            item.add_marker(pytest.mark.functional)
