import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rotortomo.basis import HilbertSpace  # noqa: E402
from rotortomo.eigensolver import ground_state  # noqa: E402
from rotortomo.hamiltonian import build_hamiltonian  # noqa: E402

_SOLUTIONS: dict = {}
CRITERIA: dict[str, tuple[bool, str]] = {}


def solve(n_sites: int, ell_max: int, R: float):
    """``(H, solution)`` memoised for the whole session; large solves take minutes."""
    key = (n_sites, ell_max, float(R))
    if key not in _SOLUTIONS:
        H = build_hamiltonian(HilbertSpace(n_sites, ell_max), R)
        _SOLUTIONS[key] = (H, ground_state(H))
    return _SOLUTIONS[key]


def record_criterion(name: str, passed: bool, detail: str) -> None:
    CRITERIA[name] = (passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
        passed, detail = CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
