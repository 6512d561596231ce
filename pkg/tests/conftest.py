import os
import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    """Isolate all tests from user's ~/.vogellab.toml and project's .vogellab.toml.

    - Sets HOME to temp directory (no user config)
    - Changes cwd to temp directory (no project config)
    - Clears VOGELLAB_THREADS
    """
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.delenv("VOGELLAB_THREADS", raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def run_module():
    """Run `python -m vogellab ...` in a subprocess."""

    def run(*args, cwd=None):
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(
            p for p in [str(REPO_ROOT), env.get("PYTHONPATH", "")] if p
        )
        return subprocess.run(
            [sys.executable, "-m", "vogellab", *args],
            capture_output=True,
            text=True,
            cwd=cwd,
            env=env,
        )

    return run
