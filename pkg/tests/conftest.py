from __future__ import annotations

from pathlib import Path

import pytest

from cadloop.dsl import DslRenderer, parse, render_mesh
from cadloop.mesh import box_mesh

FIXTURES = Path(__file__).parent / "fixtures"

BOX_PROGRAM = "extrude plane=XY z0=-20 h=40 {\n  add rect 0 0 40 40\n}\n"
HOLED_PROGRAM = (
    "extrude plane=XY z0=-20 h=40 {\n  add rect 0 0 40 40\n}\n"
    "extrude plane=XY z0=-50 h=100 op=cut {\n  add circle 0 0 10\n}\n"
)


@pytest.fixture
def unit_cube():
    return box_mesh((0, 0, 0), (1, 1, 1))


@pytest.fixture(scope="session")
def box_render():
    return render_mesh(parse(BOX_PROGRAM), 64)


@pytest.fixture(scope="session")
def renderer64():
    return DslRenderer(64)


# one line per acceptance criterion, shown after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
