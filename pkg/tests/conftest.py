import numpy as np
import pytest

from gsvdmusic.frontend import StftConfig
from gsvdmusic.synth import azimuth_grid, make_steering, preset


def rand_hpd(rng, m, n=None, lo=0.5, hi=5.0):
    """Hermitian positive definite matrices with eigenvalues in [lo, hi]."""
    shape = (m, m) if n is None else (n, m, m)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    q, _ = np.linalg.qr(z)
    w = rng.uniform(lo, hi, shape[:-1])
    return (q * w[..., None, :]) @ q.conj().swapaxes(-1, -2)


def rand_psd(rng, m, n=None, rank=None):
    """PSD matrices ``X X^H`` with ``rank`` columns (full rank by default)."""
    rank = m if rank is None else rank
    shape = (m, rank) if n is None else (n, m, rank)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return x @ x.conj().swapaxes(-1, -2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circ8():
    return preset("circular8")


@pytest.fixture(scope="session")
def circ8_steering(circ8):
    return make_steering(circ8, azimuth_grid(), cfg=StftConfig())


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append one ``criterion N: PASS|FAIL ...`` line per acceptance criterion."""

    def log(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
