"""
Integration test conftest -- a small synthetic dataset shared by the session.
"""
import os
import sys
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

# Five scenes a month apart: with the 105-day threshold the last one is "new"
SMALL_WORLD = dict(num_scenes=5, samples_per_scene=24, image_width=64, image_height=36)


@pytest.fixture(scope="session")
def small_params():
    from fusionpr.synthetic import SynthParams
    return SynthParams(**SMALL_WORLD)


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory, small_params):
    """Generate the dataset once; tests must not modify it."""
    from fusionpr.synthetic import generate_synthetic

    root = tmp_path_factory.mktemp("synthetic")
    generate_synthetic(small_params, root)
    return root


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process; returns (exit code, parsed stdout JSON or None, stderr)."""
    import json
    from fusionpr.main import run

    def _run(*argv):
        code = run([str(a) for a in argv])
        captured = capsys.readouterr()
        try:
            payload = json.loads(captured.out) if captured.out.strip() else None
        except ValueError:
            payload = None
        return code, payload, captured.err

    return _run
