import os
import tempfile

# the run store and output directory must point away from the working tree before vortexmf is imported
_STORE_DIR = tempfile.mkdtemp(prefix="vortexmf-tests-")
os.environ["DATABASE_URL"] = f"sqlite:///{os.path.join(_STORE_DIR, 'runs.db')}"
os.environ["OUTPUT_DIR"] = ""

import pytest  # noqa: E402

from vortexmf.domain import build_disk_mesh, build_grid_mesh  # noqa: E402


@pytest.fixture(scope="session")
def disk_mesh():
    return build_disk_mesh(4096)


@pytest.fixture(scope="session")
def coarse_disk_mesh():
    return build_disk_mesh(257)


@pytest.fixture(scope="session")
def grid_mesh():
    return build_grid_mesh(2.0, 2.0, 1.0 / 16.0)
