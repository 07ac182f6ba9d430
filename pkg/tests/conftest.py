import numpy as np
import pytest

from emcov.scene import MissingnessModel, SnapshotSet, sample_snapshots


def random_hpd(rng, n, cond=10.0):
    """Hermitian positive definite matrix with eigenvalues spread over ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, cond, n)
    m = (q * lam) @ q.conj().T
    return 0.5 * (m + m.conj().T)


def random_data(rng, n, k, p_m=0.3, m=None):
    m = random_hpd(rng, n) if m is None else m
    miss = MissingnessModel.bernoulli(p_m) if p_m > 0 else None
    return sample_snapshots(m, k, miss, rng).data


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture
def tiny_set():
    """Two snapshots, N = 3, with one missing entry each."""
    mask = np.array([[True, False, True], [True, True, False]])
    values = np.array([[1 + 1j, 0, 0.5], [-1, 2j, 0]])
    return SnapshotSet(3, mask, values)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per criterion; printed at the end of the run."""

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
