"""
E2E test conftest -- runs the fusionpr CLI as a subprocess, the way a user would.
"""
import json
import os
import subprocess
import sys
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

REPO_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
CLI_TIMEOUT_S = 600


@pytest.fixture(scope="session")
def fpr():
    """Call `python -m fusionpr.main ...`; returns (exit code, parsed stdout JSON or None, stderr)."""
    env = os.environ.copy()
    env["PYTHONPATH"] = REPO_ROOT + os.pathsep + env.get("PYTHONPATH", "")
    env.pop("FPR_THREADS", None)

    def _run(*argv):
        proc = subprocess.run(
            [sys.executable, "-m", "fusionpr.main", *[str(a) for a in argv]],
            cwd=REPO_ROOT, env=env, capture_output=True, text=True, timeout=CLI_TIMEOUT_S,
        )
        payload = json.loads(proc.stdout) if proc.stdout.strip() else None
        return proc.returncode, payload, proc.stderr

    return _run


@pytest.fixture(scope="session")
def pipeline_root(tmp_path_factory):
    return tmp_path_factory.mktemp("pipeline")
