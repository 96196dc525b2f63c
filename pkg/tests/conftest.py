import pytest

from cloudvision.mapcloud import build_indexed_map
from cloudvision.synth import TrajectorySpec, generate_dataset

# Filled in by tests/test_acceptance.py, printed at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def benchmark():
    """The default synthetic benchmark: 38 m loop, 30 database images, 100 queries."""
    return generate_dataset(traj_spec=TrajectorySpec(n_queries=100), seed=0)


@pytest.fixture(scope="session")
def benchmark_map(benchmark):
    ds = benchmark
    return build_indexed_map(ds.scans, ds.lidar_traj, ds.db_poses, ds.K, ds.extrinsic)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
