import numpy as np
import pytest

from korn_lab.fields import build_quadrature
from korn_lab.geometry import l_shape
from korn_lab.tree import build_overlap_cubes, build_tree
from korn_lab.whitney import whitney_decompose

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def build_mesh(domain, level, rule=2):
    cov = whitney_decompose(domain, level)
    tree = build_tree(cov)
    ov = build_overlap_cubes(tree)
    return build_quadrature(tree, ov, rule)


@pytest.fixture(scope="session")
def lshape3_mesh():
    """3D L-shaped cover at level 4 (960 cubes)."""
    return build_mesh(l_shape(3), 4)


@pytest.fixture(scope="session")
def lshape2_mesh():
    return build_mesh(l_shape(2), 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record(number, title, passed, detail):
    """Append one acceptance line (printed in the terminal summary)."""
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title}; {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed
