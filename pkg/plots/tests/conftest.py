"""Make the plots directory importable and build shared trace fixtures."""

import json
import pathlib
import subprocess
import sys

import pytest

PLOTS_DIR = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PLOTS_DIR))


@pytest.fixture(scope="session")
def experiment_dir(tmp_path_factory):
    """Run a small pool-comparison experiment through the engine CLI and
    hand back its output directory (traces + summary.json)."""
    root = tmp_path_factory.mktemp("expdata")
    out = root / "out"
    spec = {
        "name": "fixture",
        "experiment": "pool_comparison",
        "output_dir": str(out),
        "hamiltonian": {"preset": "coupled3", "params": {"primitive": 6}},
        "modal_counts": [3, 3, 3],
        "adapt": {"max_iterations": 4},
        "seed": 11,
    }
    spec_path = root / "exp.json"
    spec_path.write_text(json.dumps(spec))
    proc = subprocess.run(
        [sys.executable, "-m", "vibadapt.cli", "experiment", str(spec_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "summary.json").exists()
    return out
