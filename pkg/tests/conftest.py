import numpy as np
import pytest

from maxwell_mg.assembly import assemble_level
from maxwell_mg.materials import ANISOTROPIC_MU, MaterialMap, vacuum
from maxwell_mg.mesh import DomainSpec, generate_mesh, refine_uniform


@pytest.fixture(scope="session")
def cube2():
    return generate_mesh(DomainSpec.from_name("UnitCube"), 2)


@pytest.fixture(scope="session")
def cube3_ops():
    return assemble_level(generate_mesh("UnitCube", 3), vacuum())


@pytest.fixture(scope="session")
def cube_hierarchy_small():
    """Cube n=2 plus two uniform refinements (vacuum)."""
    m0 = generate_mesh("UnitCube", 2)
    m1 = refine_uniform(m0)
    m2 = refine_uniform(m1)
    return [assemble_level(m, vacuum()) for m in (m0, m1, m2)]


@pytest.fixture(scope="session")
def aniso_materials():
    return MaterialMap({0: ANISOTROPIC_MU}, {0: np.eye(3)})


@pytest.fixture(scope="session")
def slab_materials():
    return MaterialMap({0: np.eye(3), 1: np.eye(3)}, {0: np.eye(3), 1: 2 * np.eye(3)})


# criterion -> list of (label, passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(criterion: int, label: str, passed: bool, detail: str) -> None:
        ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    return record


def acceptance_lines() -> list[str]:
    lines = []
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        verdict = "PASS" if all(p for _, p, _ in parts) else "FAIL"
        body = "; ".join(f"{label} {'ok' if p else 'FAILED'} ({detail})" for label, p, detail in parts)
        lines.append(f"criterion {c}: {verdict} - {body}")
    return lines


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines():
            terminalreporter.write_line(line)
