import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from labelgrain.hierarchy import LabelHierarchy  # noqa: E402


def random_hierarchy(rng: np.random.Generator, k: int, n_coarse: int) -> LabelHierarchy:
    """Random surjective grouping of ``k`` fine classes into ``n_coarse`` groups."""
    mapping = np.concatenate([np.arange(n_coarse), rng.integers(0, n_coarse, k - n_coarse)])
    rng.shuffle(mapping)
    return LabelHierarchy(
        tuple(f"f{i}" for i in range(k)), tuple(f"c{c}" for c in range(n_coarse)), tuple(mapping.tolist())
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting -------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Remember a criterion outcome and echo it (visible with ``-s``)."""
    ACCEPTANCE[number] = (passed, detail)
    print(f"\ncriterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
