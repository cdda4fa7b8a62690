import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def runner_command():
    """Argv for the reference runner (installed alongside the package)."""
    return (sys.executable, "-m", "spvim_runner")


@pytest.fixture(scope="session")
def demo_dir():
    return REPO_ROOT / "demo"
