import numpy as np
import pytest

from egfem_mor.meshfe import Mesh, build_space, unit_disk, unit_square


def fd_jacobian(f, x, h=1e-6):
    """Central finite-difference Jacobian of ``f`` at ``x`` (dense)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        step = h * max(1.0, abs(x[k]))
        e[k] = step
        cols.append((f(x + e) - f(x - e)) / (2 * step))
    return np.column_stack(cols)


def dense(a):
    return a.toarray() if hasattr(a, "toarray") else np.asarray(a)


def rel_err(a, b):
    a, b = dense(a), dense(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def two_triangles():
    return Mesh.from_arrays([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(scope="session")
def reference_triangle():
    return Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


@pytest.fixture(scope="session")
def square6():
    return unit_square(6)


@pytest.fixture(scope="session")
def square16():
    return unit_square(16)


@pytest.fixture(scope="session")
def disk():
    return unit_disk(0.3)


@pytest.fixture(scope="session")
def v6(square6):
    return build_space(square6, 1)


@pytest.fixture(scope="session")
def vdisk(disk):
    return build_space(disk, 1)


# acceptance reporting ---------------------------------------------------------
_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _CRITERIA.append((mark.args[0], mark.args[1], report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for tag, title, ok, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        line = f"{'PASS' if ok else 'FAIL'} {tag:<4} {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
